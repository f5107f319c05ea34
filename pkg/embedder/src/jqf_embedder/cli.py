"""Command line front end: extract / train / predict."""

import argparse
import json
import sys

from .classify import DEFAULT_BATCH, DEFAULT_EPOCHS, DEFAULT_LR
from .pipeline import extract_features, predict_labels, train_classifier


def build_parser():
    parser = argparse.ArgumentParser(
        prog="jqf-embedder",
        description="Neural patch embeddings and patch classification.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="embed a patch directory to an exchange file")
    p.add_argument("patch_dir", help="directory of 64x64 grayscale patch images")
    p.add_argument("output", help="embedding exchange file to write")
    p.add_argument("--weights", default=None, help="backbone checkpoint path")

    p = sub.add_parser("train", help="fit the patch classifier head")
    p.add_argument("patch_dir", help="directory of 64x64 grayscale patch images")
    p.add_argument("labels", help="CSV of file,label rows covering every patch")
    p.add_argument("checkpoint", help="classifier checkpoint to write")
    p.add_argument("--epochs", type=int, default=DEFAULT_EPOCHS)
    p.add_argument("--lr", type=float, default=DEFAULT_LR)
    p.add_argument("--batch-size", type=int, default=DEFAULT_BATCH)
    p.add_argument("--weights", default=None, help="backbone checkpoint path")

    p = sub.add_parser("predict", help="label an image's 64x64 patches")
    p.add_argument("image", help="image to tile and classify")
    p.add_argument("checkpoint", help="classifier checkpoint from `train`")
    p.add_argument("output", help="exchange file (embeddings + labels) to write")

    return parser


def run_extract(args):
    count, dim, explained = extract_features(args.patch_dir, args.output, args.weights)
    print(
        json.dumps(
            {
                "command": "extract",
                "patches": count,
                "dim": dim,
                "explained_variance": round(float(explained), 6),
                "output": args.output,
            }
        )
    )


def run_train(args):
    report = train_classifier(
        args.patch_dir,
        args.labels,
        args.checkpoint,
        epochs=args.epochs,
        lr=args.lr,
        batch_size=args.batch_size,
        weights=args.weights,
    )
    print(
        json.dumps(
            {
                "command": "train",
                "top1": round(report.top1, 4),
                "top3": round(report.top3, 4),
                "train_count": report.train_count,
                "test_count": report.test_count,
                "classes": report.classes,
                "checkpoint": args.checkpoint,
            }
        )
    )


def run_predict(args):
    count, labels = predict_labels(args.image, args.checkpoint, args.output)
    hist = {}
    for label in labels.tolist():
        hist[str(label)] = hist.get(str(label), 0) + 1
    print(
        json.dumps(
            {
                "command": "predict",
                "patches": count,
                "label_counts": hist,
                "output": args.output,
            }
        )
    )


def main(argv=None):
    args = build_parser().parse_args(argv)
    handler = {"extract": run_extract, "train": run_train, "predict": run_predict}[
        args.command
    ]
    try:
        handler(args)
    except (ValueError, OSError) as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
