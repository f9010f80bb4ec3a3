"""Independent scalar re-implementation of the network arithmetic.

Used as the oracle for forward/gradient checks.  Everything is written as
plain loop nests over floats so it shares no code path with the library.
"""

from __future__ import annotations

import math

import numpy as np


def conv2d(x, w, b, stride=1):
    """x (C,H,W), w (OC,C,K,K), b (OC,) -> (OC,OH,OW)."""
    c, h, wd = x.shape
    oc, _, k, _ = w.shape
    oh = (h - k) // stride + 1
    ow = (wd - k) // stride + 1
    out = np.zeros((oc, oh, ow))
    for o in range(oc):
        for y in range(oh):
            for xx in range(ow):
                acc = b[o]
                for ci in range(c):
                    for i in range(k):
                        for j in range(k):
                            acc += w[o, ci, i, j] * x[ci, y * stride + i, xx * stride + j]
                out[o, y, xx] = acc
    return out


def maxpool(x, size=2):
    c, h, w = x.shape
    oh, ow = h // size, w // size
    out = np.zeros((c, oh, ow))
    for ci in range(c):
        for y in range(oh):
            for xx in range(ow):
                out[ci, y, xx] = x[ci, y * size : (y + 1) * size, xx * size : (xx + 1) * size].max()
    return out


def relu(x):
    return np.where(x > 0, x, 0.0)


def dense(x, w, b):
    """x (F,), w (O,F), b (O,) -> (O,)."""
    out = np.zeros(len(b))
    for o in range(len(b)):
        acc = b[o]
        for f in range(len(x)):
            acc += w[o, f] * x[f]
        out[o] = acc
    return out


def forward_image(specs_params, image):
    """Run one image through a list of ("conv"|"pool"|"relu"|"flatten"|"dense", args) layers."""
    act = image
    for kind, args in specs_params:
        if kind == "conv":
            act = conv2d(act, *args)
        elif kind == "pool":
            act = maxpool(act, *args)
        elif kind == "relu":
            act = relu(act)
        elif kind == "flatten":
            act = act.reshape(-1)
        elif kind == "dense":
            act = dense(act, *args)
    return act


def softmax_ce(logits, target):
    m = max(logits)
    lse = m + math.log(sum(math.exp(z - m) for z in logits))
    return lse - logits[target]


def activation_margins(specs_params, image):
    """(min |relu input|, min positive pool top1-top2 gap) along the stack.

    Windows whose maximum is <= 0 are ignored for the pool gap: gradient
    through them dies at an adjacent relu anyway.
    """
    act = image
    relu_margin = math.inf
    pool_margin = math.inf
    for kind, args in specs_params:
        if kind == "conv":
            act = conv2d(act, *args)
        elif kind == "relu":
            relu_margin = min(relu_margin, float(np.abs(act).min()))
            act = relu(act)
        elif kind == "pool":
            size = args[0]
            c, h, w = act.shape
            for ci in range(c):
                for y in range(h // size):
                    for xx in range(w // size):
                        win = np.sort(act[ci, y * size : (y + 1) * size, xx * size : (xx + 1) * size].ravel())
                        if win[-1] > 0.0:
                            pool_margin = min(pool_margin, float(win[-1] - win[-2]))
            act = maxpool(act, size)
        elif kind == "flatten":
            act = act.reshape(-1)
        elif kind == "dense":
            act = dense(act, *args)
    return relu_margin, pool_margin
