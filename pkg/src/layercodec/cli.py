"""Command-line front end.

encode/decode/stats are thin clients of the codec service (in-process by
default, --server for a remote instance); train and eval run locally as
batch jobs. All commands are deterministic for fixed inputs and seed and
never leave partial output files behind.
"""

from __future__ import annotations

import json
import os
import sys

import click

from .client import CodecClient
from .errors import LayercodecError

DEFAULT_QPS = "17,22,27,32,37,42"


def _write_atomic(path, data: bytes):
    tmp = os.fspath(path) + ".tmp"
    with open(tmp, "wb") as fh:
        fh.write(data)
    os.replace(tmp, os.fspath(path))


def _fail(message: str):
    click.echo(f"error: {message}", err=True)
    sys.exit(1)


@click.group()
def main():
    """Layered image codec for machine tasks and human viewing."""


@main.command()
@click.option("--image", "image_path", required=True, type=click.Path(exists=True))
@click.option("--annotations", "ann_path", type=click.Path(exists=True),
              help="JSON-lines polygons; required unless the model is profile-less.")
@click.option("--dictionary", "dict_path", type=click.Path(exists=True),
              help="Tab-separated category dictionary; default is built in.")
@click.option("--weights", type=click.Path(exists=True),
              help="Checkpoint for the in-process service.")
@click.option("--server", help="Remote service URL instead of in-process.")
@click.option("--qp", type=click.IntRange(0, 51), default=None,
              help="Residual quantization parameter; omit to skip stream3.")
@click.option("--out", "out_path", required=True, type=click.Path())
def encode(image_path, ann_path, dict_path, weights, server, qp, out_path):
    """Encode an image (and its annotations) into a layered container."""
    try:
        with CodecClient(server=server, weights=weights) as client:
            data = client.encode(
                image=_read(image_path),
                annotations=_read(ann_path) if ann_path else None,
                dictionary=_read(dict_path) if dict_path else None,
                qp=qp)
        _write_atomic(out_path, data)
    except (LayercodecError, OSError) as exc:
        _fail(str(exc))
    click.echo(f"wrote {out_path} ({len(data)} bytes)")


@main.command()
@click.option("--container", "container_path", required=True,
              type=click.Path(exists=True))
@click.option("--level", type=click.Choice(["tasks", "general", "high"]),
              default="tasks", show_default=True)
@click.option("--weights", type=click.Path(exists=True))
@click.option("--server", help="Remote service URL instead of in-process.")
@click.option("--out-dir", required=True, type=click.Path())
def decode(container_path, level, weights, server, out_dir):
    """Decode a container to task JSON and/or PPM images."""
    try:
        data = _read(container_path)
        os.makedirs(out_dir, exist_ok=True)
        with CodecClient(server=server, weights=weights) as client:
            if level == "tasks":
                tasks = client.decode_tasks(data)
                _write_atomic(os.path.join(out_dir, "tasks.json"),
                              json.dumps(tasks, indent=2).encode())
                click.echo(f"wrote {out_dir}/tasks.json "
                           f"({len(tasks['instances'])} instances)")
                return
            image = client.decode_image(data, level)
            name = f"{level}.ppm"
            _write_atomic(os.path.join(out_dir, name), image)
            click.echo(f"wrote {out_dir}/{name}")
    except (LayercodecError, OSError) as exc:
        _fail(str(exc))


@main.command()
@click.option("--container", "container_path", required=True,
              type=click.Path(exists=True))
@click.option("--server", help="Remote service URL instead of in-process.")
@click.option("--as-json", is_flag=True, help="Emit machine-readable JSON.")
def stats(container_path, server, as_json):
    """Per-stream bit cost and bits per pixel of a container."""
    try:
        with CodecClient(server=server) as client:
            info = client.stats(_read(container_path))
    except (LayercodecError, OSError) as exc:
        _fail(str(exc))
    if as_json:
        click.echo(json.dumps(info, indent=2))
        return
    click.echo(f"pixels       {info['pixels']}")
    for idx, label in enumerate(["profile", "features", "residual"], start=1):
        click.echo(f"stream{idx} ({label + ')':<10}{info[f'bits_s{idx}']:>10} bits"
                   f"  {info[f'bpp_s{idx}']:.4f} bpp")
    click.echo(f"total        {info['total_bits']:>10} bits  "
               f"{info['bpp_total']:.4f} bpp")


@main.command()
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_path", required=True, type=click.Path())
@click.option("--epochs", default=50, show_default=True)
@click.option("--lr", default=0.02, show_default=True)
@click.option("--batch-size", default=8, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--norm", type=click.Choice(["channel", "batch", "instance"]),
              default="channel", show_default=True)
@click.option("--profile/--no-profile", "use_profile", default=True,
              show_default=True, help="Feed the instance profile to the networks.")
@click.option("--desk/--full", default=True, show_default=True,
              help="Desk preset divides channel widths by 8.")
@click.option("--loss-csv", type=click.Path(), help="Write the loss trace here.")
@click.option("--checkpoint-dir", type=click.Path(),
              help="Also write per-epoch checkpoints here.")
def train(corpus_dir, out_path, epochs, lr, batch_size, seed, norm,
          use_profile, desk, loss_csv, checkpoint_dir):
    """Train extractor + predictor on a corpus directory."""
    from . import trainer as T
    from .corpus import load_corpus
    from .networks import build_model, save_model

    try:
        _, items = load_corpus(corpus_dir)
        if not items:
            _fail(f"no images found under {corpus_dir}")
        model = build_model(norm_kind=norm,
                            width_divisor=8 if desk else 1,
                            include_profile=use_profile, seed=seed)
        dataset = [T.make_example(item.image, item.imap, use_profile)
                   for item in items]
        config = T.TrainConfig(epochs=epochs, lr=lr, batch_size=batch_size,
                               seed=seed)
        result = T.train(dataset, model, config, checkpoint_dir=checkpoint_dir,
                         log=lambda step, loss: click.echo(
                             f"step {step:5d}  l1 {loss.l1_term:8.4f}  "
                             f"ssim {loss.ssim_term:7.4f}  total {loss.total:8.4f}"))
        save_model(model, out_path)
        if loss_csv:
            result.write_csv(loss_csv)
    except LayercodecError as exc:
        _fail(str(exc))
    click.echo(f"wrote {out_path} (final loss {result.last_loss:.4f})")


@main.command(name="eval")
@click.option("--corpus", "corpus_dir", required=True, type=click.Path(exists=True))
@click.option("--weights", required=True, type=click.Path(exists=True))
@click.option("--qps", default=DEFAULT_QPS, show_default=True,
              help="Comma-separated residual QPs.")
@click.option("--out-csv", required=True, type=click.Path())
@click.option("--out-svg", type=click.Path(), help="Also render an RD scatter.")
def eval_cmd(corpus_dir, weights, qps, out_csv, out_svg):
    """Rate-distortion sweep over a corpus: encode, decode, measure, tabulate."""
    from .corpus import load_corpus
    from .metrics import rd_sweep, write_rd_csv
    from .networks import load_model
    from .svgplot import write_rd_svg

    try:
        qp_list = [int(q) for q in qps.split(",") if q.strip()]
        _, items = load_corpus(corpus_dir)
        model = load_model(weights)
        failures = []
        points = rd_sweep(((it.name, it.image, it.imap) for it in items),
                          model, qp_list,
                          on_error=lambda name, exc: failures.append((name, exc)))
        if not points:
            _fail("every corpus item failed to code")
        write_rd_csv(points, out_csv)
        if out_svg:
            write_rd_svg(points, out_svg)
    except (LayercodecError, OSError, ValueError) as exc:
        _fail(str(exc))
    for name, exc in failures:
        click.echo(f"warning: {name}: {exc}", err=True)
    click.echo(f"wrote {out_csv} ({len(points)} points"
               f"{', ' + out_svg if out_svg else ''})")


@main.command(name="make-corpus")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--count", default=20, show_default=True)
@click.option("--size", default=64, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--max-instances", default=5, show_default=True)
def make_corpus(out_dir, count, size, seed, max_instances):
    """Generate the synthetic desk-scale corpus used for CI and demos."""
    from .corpus import write_corpus

    write_corpus(out_dir, count=count, size=size, seed=seed,
                 max_instances=max_instances)
    click.echo(f"wrote {count} images under {out_dir}")


@main.command()
@click.option("--weights", type=click.Path(exists=True))
@click.option("--host", default="127.0.0.1", show_default=True)
@click.option("--port", default=8000, show_default=True)
def serve(weights, host, port):
    """Run the codec service."""
    import uvicorn

    from .service import create_app

    uvicorn.run(create_app(weights), host=host, port=port)


def _read(path) -> bytes:
    with open(path, "rb") as fh:
        return fh.read()


if __name__ == "__main__":
    main()
