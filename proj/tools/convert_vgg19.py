#!/usr/bin/env python3
"""Write torchvision VGG19 convolution weights as a kpmask weights file.

    python tools/convert_vgg19.py vgg19.kpmk                # downloads ImageNet weights
    python tools/convert_vgg19.py vgg19.kpmk --state-dict vgg19-dcbb9e9d.pth
    python tools/convert_vgg19.py vgg19.kpmk --random       # layout check, no download

Point loss.extractor_weights at the output.
"""
import argparse
import struct

import numpy as np
import torch
import torchvision

STAGE_CONVS = [2, 2, 4, 4, 4]


def fnv1a(data: bytes) -> int:
    h = 0xCBF29CE484222325
    for b in data:
        h = ((h ^ b) * 0x100000001B3) & 0xFFFFFFFFFFFFFFFF
    return h


def blob(name: str, array: np.ndarray) -> bytes:
    dims = list(array.shape) + [1] * (4 - array.ndim)
    encoded = name.encode()
    out = struct.pack("<I", len(encoded)) + encoded + struct.pack("<4I", *dims)
    return out + np.ascontiguousarray(array, dtype="<f8").tobytes()


def main() -> None:
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("out")
    source = parser.add_mutually_exclusive_group()
    source.add_argument("--state-dict", help="local torchvision vgg19 .pth file")
    source.add_argument("--random", action="store_true", help="random weights")
    args = parser.parse_args()

    if args.random:
        torch.manual_seed(0)
        model = torchvision.models.vgg19(weights=None)
    elif args.state_dict:
        model = torchvision.models.vgg19(weights=None)
        model.load_state_dict(torch.load(args.state_dict, map_location="cpu"))
    else:
        model = torchvision.models.vgg19(weights=torchvision.models.VGG19_Weights.IMAGENET1K_V1)

    convs = [m for m in model.features if isinstance(m, torch.nn.Conv2d)]
    assert len(convs) == sum(STAGE_CONVS)
    blobs = []
    it = iter(convs)
    for s, n in enumerate(STAGE_CONVS):
        for i in range(n):
            conv = next(it)
            name = f"vgg19.stage{s}.conv{i}"
            blobs.append(blob(name + ".weight", conv.weight.detach().double().numpy()))
            bias = conv.bias.detach().double().numpy().reshape(-1, 1, 1, 1)
            blobs.append(blob(name + ".bias", bias))

    config = b"loss.extractor = vgg19\n"
    body = b"KPMK" + struct.pack("<IIIddQ", 1, 0, 0, 0.0, 0.0, 0)
    body += struct.pack("<I", len(config)) + config
    body += struct.pack("<I", len(blobs)) + b"".join(blobs)
    with open(args.out, "wb") as f:
        f.write(body + struct.pack("<Q", fnv1a(body)) + b"KEND")


if __name__ == "__main__":
    main()
