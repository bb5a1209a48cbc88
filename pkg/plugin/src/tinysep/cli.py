"""Command line entry points: serve a checkpoint, or train one."""

import argparse
import sys

import numpy as np
import torch

from . import protocol
from .model import ModelConfig, build_model, load_checkpoint, save_checkpoint
from .train import evaluate, train


def _inference(model):
    def separate(samples: np.ndarray) -> np.ndarray:
        # copy: the wire hands over a read-only buffer view
        frame = torch.from_numpy(np.array(samples, dtype=np.float32))
        with torch.no_grad():
            out = model(frame.unsqueeze(0))
        return out.squeeze(0).numpy()
    return separate


def _build_parser():
    parser = argparse.ArgumentParser(prog="tinysep")
    sub = parser.add_subparsers(dest="command", required=True)

    serve = sub.add_parser("serve", help="answer CSS1 frame requests on stdin/stdout")
    serve.add_argument("--checkpoint", help="trained model to load")
    serve.add_argument("--untrained", action="store_true",
                       help="serve a freshly initialized model instead")
    serve.add_argument("--window", type=int, default=2048)
    serve.add_argument("--sample-rate", type=int, default=8000)
    serve.add_argument("--channels", type=int, default=2)
    serve.add_argument("--seed", type=int, default=0)

    fit = sub.add_parser("train", help="train on synthetic two-tone mixtures")
    fit.add_argument("--out", required=True, help="checkpoint path to write")
    fit.add_argument("--steps", type=int, default=300)
    fit.add_argument("--batch", type=int, default=16)
    fit.add_argument("--lr", type=float, default=1e-3)
    fit.add_argument("--seed", type=int, default=0)
    fit.add_argument("--window", type=int, default=2048)
    fit.add_argument("--sample-rate", type=int, default=8000)
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    if args.command == "serve":
        if args.checkpoint:
            model = load_checkpoint(args.checkpoint)
        elif args.untrained:
            config = ModelConfig(sample_rate=args.sample_rate, window=args.window,
                                 channels=args.channels)
            model = build_model(config, seed=args.seed)
            model.eval()
        else:
            print("serve needs --checkpoint or --untrained", file=sys.stderr)
            return 2
        c = model.config
        return protocol.serve(_inference(model), c.sample_rate, c.window, c.channels)
    config = ModelConfig(sample_rate=args.sample_rate, window=args.window)
    model = train(config, steps=args.steps, batch=args.batch,
                  lr=args.lr, seed=args.seed)
    save_checkpoint(model, args.out)
    held_out = evaluate(model, seed=args.seed + 9999)
    print(f"held-out mean PIT SI-SDR: {held_out:.2f} dB")
    return 0


if __name__ == "__main__":
    sys.exit(main())
