#!/usr/bin/env python3
"""Regenerate the transform parity fixtures with torchvision.

Writes 20 deterministic input images under inputs/, one reference output per
(image, default suite spec) under expected/, and manifest.csv describing each
pair. The C++ test suite only reads the committed files.

    python3 generate_fixtures.py [--out DIR]
"""
import argparse
import csv
import math
import os

import numpy as np
import torch
import torchvision
import torchvision.transforms.functional as F
from PIL import Image

BASES = {"gamma": 1.5, "contrast": 1.4, "brightness": 1.3, "sharpness": 2.0}
BLUR_STEP = 0.6
KINDS = ["gamma", "contrast", "brightness", "sharpness", "blur"]


def default_suite():
    specs = []
    for kind in KINDS:
        levels = range(1, 7) if kind == "blur" else [-3, -2, -1, 1, 2, 3]
        for level in levels:
            if kind == "blur":
                param = BLUR_STEP * level
            else:
                param = BASES[kind] ** level
            specs.append((kind, level, param))
    return specs


def tag(kind, level):
    return f"{kind}{'+' if level > 0 else ''}{level}"


def make_inputs(rng):
    images = []
    shapes = [(32, 40), (40, 32), (48, 48), (36, 44), (44, 36)]
    for i in range(20):
        h, w = shapes[i % len(shapes)]
        channels = 3 if i % 5 in (1, 3) else 1
        yy, xx = np.mgrid[0:h, 0:w].astype(np.float64)
        style = i % 4
        if style == 0:
            base = (xx / (w - 1)) * 0.7 + (yy / (h - 1)) * 0.3
        elif style == 1:
            cy, cx = rng.uniform(0.3, 0.7) * h, rng.uniform(0.3, 0.7) * w
            r = np.hypot(yy - cy, xx - cx)
            base = 0.15 + 0.75 * np.exp(-(r / (0.3 * min(h, w))) ** 2)
        elif style == 2:
            base = 0.5 + 0.35 * np.sin(xx * rng.uniform(0.2, 0.6)) * np.cos(yy * rng.uniform(0.2, 0.6))
        else:
            base = rng.uniform(0.0, 1.0, size=(h, w))
        img = np.empty((h, w, channels))
        for c in range(channels):
            noise = rng.normal(0.0, 0.06, size=(h, w))
            img[:, :, c] = base * (1.0 - 0.15 * c) + noise
        img = np.clip(np.round(img * 255.0), 0, 255).astype(np.uint8)
        images.append(img)
    return images


def to_tensor(arr):
    t = torch.from_numpy(arr.astype(np.float32) / np.float32(255.0))
    return t.permute(2, 0, 1).contiguous()


def apply(kind, param, t):
    if kind == "gamma":
        return F.adjust_gamma(t, param, 1.0)
    if kind == "contrast":
        return F.adjust_contrast(t, param)
    if kind == "brightness":
        return F.adjust_brightness(t, param)
    if kind == "sharpness":
        return F.adjust_sharpness(t, param)
    radius = math.ceil(3.0 * param)
    size = 2 * radius + 1
    return F.gaussian_blur(t, [size, size], [param, param])


def save(t, path):
    q = torch.clamp(t, 0.0, 1.0).mul(255.0).round().to(torch.uint8)
    arr = q.permute(1, 2, 0).numpy()
    mode = "L" if arr.shape[2] == 1 else "RGB"
    Image.fromarray(arr[:, :, 0] if mode == "L" else arr, mode).save(path, optimize=False)


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--out", default=os.path.dirname(os.path.abspath(__file__)))
    args = parser.parse_args()
    rng = np.random.default_rng(20220)
    os.makedirs(os.path.join(args.out, "inputs"), exist_ok=True)
    os.makedirs(os.path.join(args.out, "expected"), exist_ok=True)
    rows = []
    for idx, img in enumerate(make_inputs(rng)):
        name = f"img{idx:02d}"
        in_rel = f"inputs/{name}.png"
        mode = "L" if img.shape[2] == 1 else "RGB"
        Image.fromarray(img[:, :, 0] if mode == "L" else img, mode).save(os.path.join(args.out, in_rel))
        t = to_tensor(img)
        for kind, level, param in default_suite():
            out_rel = f"expected/{name}__{tag(kind, level)}.png"
            save(apply(kind, param, t), os.path.join(args.out, out_rel))
            rows.append([in_rel, kind, level, repr(param), out_rel])
    with open(os.path.join(args.out, "manifest.csv"), "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["input", "kind", "level", "parameter", "output"])
        w.writerows(rows)
    with open(os.path.join(args.out, "VERSION"), "w") as f:
        f.write(f"torch {torch.__version__}\ntorchvision {torchvision.__version__}\n")


if __name__ == "__main__":
    main()
