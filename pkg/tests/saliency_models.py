"""Hand-built classifiers with known saliency structure."""
import numpy as np

from accentmask import classifier as clf

SMALL_INPUT = (1, 80, 48)


def mean_head_model(seed=0, input_shape=SMALL_INPUT, channel=0, target=0):
    """Random conv stack whose ``target`` logit is the spatial mean of one last-conv map.

    fc1 unit 0 averages feature channel ``channel``; fc2 routes that unit to
    ``target``. A positive conv4 bias keeps the channel (and so the hidden
    unit) alive.
    """
    cfg = clf.ClassifierConfig(n_classes=2, input_shape=input_shape)
    model = clf.build(cfg, seed=seed)
    c, h, w = cfg.feature_shape
    p = model.params
    p["conv4.bias"].data[channel] = 0.1
    fc1 = np.zeros((cfg.fc_hidden, c, h, w))
    fc1[0, channel] = 1.0 / (h * w)
    p["fc1.weight"].data[...] = fc1.reshape(cfg.fc_hidden, -1)
    p["fc1.bias"].data[...] = 0.0
    p["fc2.weight"].data[...] = 0.0
    p["fc2.weight"].data[target, 0] = 1.0
    p["fc2.bias"].data[...] = 0.0
    return model


def dead_model(input_shape=SMALL_INPUT):
    model = clf.build(clf.ClassifierConfig(n_classes=2, input_shape=input_shape), seed=0)
    for t in model.params.values():
        t.data[...] = 0.0
    return model
