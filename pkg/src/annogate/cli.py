"""Command-line entry points: annotate, rag-index, calibrate, noise-exp."""

from __future__ import annotations

import json
from pathlib import Path

import click

from . import fixtures
from .calibration import Baseline, default_grid, export_curve, select_threshold, sweep
from .catalog import load_catalog, load_dataset
from .classifier import TrainConfig
from .engines import AnnotationOutcome
from .errors import ConfigError
from .gateway import GatewayClient, ModelEndpoint
from .noiselab import run_experiment
from .orchestrator import export_report, load_job_config, run_job
from .orchestrator.job import STATUS_FAILED
from .orchestrator.journal import read_records
from .rag import BM25Index, FlatIPIndex, build_indexes, embed, load_corpus
from .stub_server import StubServer


# --- annotate ----------------------------------------------------------------


@click.group()
def annotate() -> None:
    """Run annotation jobs, serve the review API, and export reports."""


@annotate.command("run")
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
def annotate_run(config_path: str) -> None:
    """Run (or resume) the annotation job described by a TOML config."""
    state = run_job(load_job_config(config_path))
    click.echo(json.dumps(state.counters, indent=2))


@annotate.command("serve")
@click.option("--job", "job_dir", required=True, type=click.Path(exists=True))
@click.option("--port", default=8800, show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
def annotate_serve(job_dir: str, port: int, host: str) -> None:
    """Serve the review API over a job directory."""
    import uvicorn

    from .orchestrator.api import make_app

    uvicorn.run(make_app(job_dir), host=host, port=port, log_level="warning")


@annotate.command("report")
@click.option("--job", "job_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", default=None, type=click.Path())
def annotate_report(job_dir: str, out_dir: str | None) -> None:
    """Export the metric/latency report bundle for a job."""
    report = export_report(job_dir, out_dir=out_dir)
    click.echo(json.dumps(report, indent=2))


@annotate.command("seed-demo")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--threshold", default=0.8, show_default=True)
def annotate_seed_demo(out_dir: str, threshold: float) -> None:
    """Build and run the bundled 10-item demo job against the stub endpoint.

    Leaves a completed job directory (7 decided, 3 abstained) under
    OUT/job, ready for `annotate serve` and the review console.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    fixtures.write_demo_catalog(out / "catalog.json")
    fixtures.write_demo_dataset(out / "dataset.jsonl")
    catalog = load_catalog(out / "catalog.json")
    fixtures.write_demo_stub_script(out / "stub_script.jsonl", catalog)

    stub = StubServer.from_script_file(out / "stub_script.jsonl")
    url = stub.start()
    try:
        config_text = (
            "[job]\n"
            'id = "demo"\n'
            'kind = "binary"\n'
            'dataset = "dataset.jsonl"\n'
            'catalog = "catalog.json"\n'
            'output_dir = "job"\n'
            "parallelism = 1\n"
            "\n"
            "[[engines]]\n"
            'approach = "prob"\n'
            f"threshold = {threshold}\n"
            f'base_url = "{url}"\n'
            'model = "stub-model"\n'
        )
        (out / "job.toml").write_text(config_text, encoding="utf-8")
        state = run_job(load_job_config(out / "job.toml"))
    finally:
        stub.stop()
    click.echo(json.dumps(state.counters, indent=2))
    click.echo(f"job directory: {out / 'job'}")


# --- rag-index ------------------------------------------------------------------


@click.group(name="rag-index")
def rag_index() -> None:
    """Build and query retrieval indexes over a document corpus."""


@rag_index.command("build")
@click.option("--corpus", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--max-chunk-length", default=500, show_default=True)
@click.option("--embed-url", default=None, help="Embedding endpoint base URL")
@click.option("--embed-model", default="embedder", show_default=True)
def rag_index_build(
    corpus: str,
    out_dir: str,
    max_chunk_length: int,
    embed_url: str | None,
    embed_model: str,
) -> None:
    """Chunk the corpus and persist the BM25 (and optional vector) index."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    endpoint = (
        ModelEndpoint(base_url=embed_url, model=embed_model) if embed_url else None
    )
    indexes = build_indexes(
        load_corpus(corpus),
        max_chunk_length=max_chunk_length,
        embed_endpoint=endpoint,
    )
    with open(out / "chunks.jsonl", "w", encoding="utf-8") as fh:
        for chunk in indexes.chunks.values():
            fh.write(
                json.dumps(
                    {
                        "chunk_id": chunk.id,
                        "doc_id": chunk.doc_id,
                        "position": chunk.position,
                        "text": chunk.text,
                    }
                )
                + "\n"
            )
    indexes.bm25.save(out / "bm25.json")
    built = ["bm25"]
    if indexes.flat is not None:
        indexes.flat.save(out / "flat.npz")
        built.append("flat-ip")
    click.echo(f"built {', '.join(built)} over {len(indexes.chunks)} chunks")


@rag_index.command("search")
@click.option("--index", "index_dir", required=True, type=click.Path(exists=True))
@click.option("--query", required=True)
@click.option("--k", default=5, show_default=True)
@click.option(
    "--retriever",
    type=click.Choice(["bm25", "embedding"]),
    default="bm25",
    show_default=True,
)
@click.option("--embed-url", default=None)
@click.option("--embed-model", default="embedder", show_default=True)
def rag_index_search(
    index_dir: str,
    query: str,
    k: int,
    retriever: str,
    embed_url: str | None,
    embed_model: str,
) -> None:
    """Search a persisted index."""
    index_path = Path(index_dir)
    if retriever == "bm25":
        result = BM25Index.load(index_path / "bm25.json").search(query, k)
    else:
        if not embed_url:
            raise click.UsageError("embedding search requires --embed-url")
        endpoint = ModelEndpoint(base_url=embed_url, model=embed_model)
        vector = embed(GatewayClient(), endpoint, [query])[0]
        result = FlatIPIndex.load(index_path / "flat.npz").search(vector, k)
    for chunk_id, score in result.entries:
        click.echo(f"{score:10.4f}  {chunk_id}")


# --- calibrate --------------------------------------------------------------------


@click.command()
@click.option("--outcomes", required=True, type=click.Path(exists=True),
              help="Outcome journal (JSON Lines) with answer probabilities")
@click.option("--refs", required=True, type=click.Path(exists=True),
              help="Labeled dataset file providing reference labels")
@click.option("--catalog", "catalog_path", required=True, type=click.Path(exists=True))
@click.option("--baseline", "baseline_path", default=None, type=click.Path(exists=True),
              help="JSON file of metric floors to select a threshold against")
@click.option("--grid", "grid_step", default=0.01, show_default=True)
@click.option("--out-csv", default="curve.csv", show_default=True, type=click.Path())
@click.option("--out-plot", default=None, type=click.Path())
@click.option("--role", default="calibration", show_default=True)
def calibrate(
    outcomes: str,
    refs: str,
    catalog_path: str,
    baseline_path: str | None,
    grid_step: float,
    out_csv: str,
    out_plot: str | None,
    role: str,
) -> None:
    """Sweep abstention thresholds on a calibration batch."""
    if role == "benchmark":
        raise ConfigError(
            "refusing to calibrate on a benchmark dataset; "
            "thresholds are chosen on separate calibration data"
        )
    catalog = load_catalog(catalog_path)
    dataset = load_dataset(refs, catalog, provenance=f"role={role}")
    records = [
        AnnotationOutcome.from_record(r)
        for r in read_records(outcomes)
        if r.get("status") != STATUS_FAILED
    ]
    points = sweep(records, dataset, default_grid(grid_step))
    export_curve(points, out_csv, plot_path=out_plot)
    click.echo(f"swept {len(points)} thresholds over {len(records)} outcomes")
    if baseline_path:
        chosen = select_threshold(points, Baseline.load(baseline_path))
        click.echo(
            json.dumps(
                {
                    "threshold": chosen.threshold,
                    "coverage": chosen.coverage,
                    "accuracy": chosen.accuracy,
                    "accuracy_total": chosen.accuracy_total,
                },
                indent=2,
            )
        )


# --- noise-exp ---------------------------------------------------------------------


def _parse_rates(spec: str) -> list[float]:
    if ":" in spec:
        start, stop, step = (float(x) for x in spec.split(":"))
        rates = []
        value = start
        while value <= stop + 1e-9:
            rates.append(round(value, 10))
            value += step
        return rates
    return [float(x) for x in spec.split(",")]


@click.command(name="noise-exp")
@click.option("--dataset", "dataset_path", required=True, type=click.Path(exists=True))
@click.option("--catalog", "catalog_path", required=True, type=click.Path(exists=True))
@click.option("--kinds", default="fp_nearest,fn_delete", show_default=True)
@click.option("--rates", default="0:0.9:0.1", show_default=True,
              help="start:stop:step range or comma-separated list")
@click.option("--seeds", default=5, show_default=True, help="number of seeds")
@click.option("--out", "out_dir", required=True, type=click.Path())
@click.option("--epochs", default=15, show_default=True)
@click.option("--lr", default=0.5, show_default=True)
@click.option("--batch-size", default=32, show_default=True)
@click.option("--test-fraction", default=0.25, show_default=True)
def noise_exp(
    dataset_path: str,
    catalog_path: str,
    kinds: str,
    rates: str,
    seeds: int,
    out_dir: str,
    epochs: int,
    lr: float,
    batch_size: int,
    test_fraction: float,
) -> None:
    """Label-noise degradation experiment: corrupt, retrain, evaluate."""
    catalog = load_catalog(catalog_path)
    dataset = load_dataset(dataset_path, catalog)
    curves = run_experiment(
        dataset,
        rates=_parse_rates(rates),
        kinds=[k.strip() for k in kinds.split(",") if k.strip()],
        seeds=list(range(seeds)),
        train_config=TrainConfig(
            epochs=epochs, learning_rate=lr, batch_size=batch_size
        ),
        out_dir=out_dir,
        test_fraction=test_fraction,
    )
    for kind, curve in curves.items():
        click.echo(f"{kind}:")
        for rate, mean, std in zip(
            curve.rates, curve.mean_accuracy, curve.std_accuracy
        ):
            click.echo(f"  rate {rate:4.2f}  accuracy {mean:.4f} +/- {std:.4f}")
    click.echo(f"artifacts written to {out_dir}")


if __name__ == "__main__":
    annotate()
