# Copyright 2026 The diloco-desk Authors
# SPDX-License-Identifier: Apache-2.0
"""Independent numpy forward pass for the pinned loss test in test_models.cpp.

Parameters are filled with 0.5 * sin(0.7 * i + 0.3) over the flat layout.
"""
import numpy as np


def pinned(n):
    return 0.5 * np.sin(0.7 * np.arange(n) + 0.3)


def xent(logits, targets):
    m = logits.max(axis=1, keepdims=True)
    lse = (m + np.log(np.exp(logits - m).sum(axis=1, keepdims=True)))[:, 0]
    return float(np.mean(lse - logits[np.arange(len(targets)), targets]))


def mlp(V, C, E, hidden, contexts, targets):
    shapes = [(V, E)]
    fan_in = C * E
    for h in hidden:
        shapes += [(fan_in, h), (h,)]
        fan_in = h
    shapes += [(fan_in, V), (V,)]
    flat = pinned(sum(int(np.prod(s)) for s in shapes))
    tensors, off = [], 0
    for s in shapes:
        n = int(np.prod(s))
        tensors.append(flat[off:off + n].reshape(s))
        off += n
    x = tensors[0][np.array(contexts)].reshape(len(contexts), C * E)
    for l in range(len(hidden)):
        x = np.tanh(x @ tensors[1 + 2 * l] + tensors[2 + 2 * l])
    return xent(x @ tensors[-2] + tensors[-1], np.array(targets))


def softmax_regression(V, inputs, targets):
    flat = pinned(V * V + V)
    w, b = flat[:V * V].reshape(V, V), flat[V * V:]
    return xent(w[np.array(inputs)] + b, np.array(targets))


if __name__ == "__main__":
    print("mlp  %.17g" % mlp(5, 3, 2, [4, 3], [[0, 1, 2], [4, 4, 3], [2, 0, 1]], [3, 0, 4]))
    print("soft %.17g" % softmax_regression(4, [0, 3, 2], [1, 1, 0]))
