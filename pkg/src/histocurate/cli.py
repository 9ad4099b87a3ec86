"""Multi-command CLI driving the curation pipeline.

Subcommands are thin wrappers over the library; every command that uses
randomness takes --seed. Exit codes: 0 success, 1 usage error, 2 data or
I/O error.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import click
import numpy as np

from . import clustering as cl
from . import conceptmap as cmap
from . import formats
from . import pipeline as pl
from . import probe as pb
from . import retrieval as rt
from . import sampler as sp
from . import synth as sy
from .augment import augment_view, reinhard_transfer
from .catalog import TileRef, assign_groups, load_group_rules, load_manifest, read_tile, save_manifest
from .errors import HistocurateError
from .stain import StainStats


@click.group()
def cli():
    """Slide curation, balanced sampling, and reference-case search."""


def _load_assigned(manifest):
    catalog = load_manifest(manifest)
    if any(rec.group_id < 0 for rec in catalog):
        raise click.UsageError("manifest has unassigned groups; run 'ingest' with --rules first")
    return catalog


def _write_label_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        writer.writerows(rows)


def _read_label_csv(path, columns=2):
    rows = []
    with open(path, newline="") as fh:
        for record in csv.reader(fh):
            if not record or not record[0].strip().lstrip("-").isdigit():
                continue  # header or blank
            rows.append(tuple(int(v) for v in record[:columns]))
    return rows


@cli.command()
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--rules", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def ingest(manifest, rules, out):
    """Load a manifest, assign slide groups, write the assigned manifest."""
    catalog = assign_groups(load_manifest(manifest), load_group_rules(rules))
    save_manifest(catalog, out)
    groups = {rec.group_id for rec in catalog}
    click.echo(f"ingested {len(catalog)} slides into {len(groups)} groups -> {out}")


@cli.command()
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--tile-size", default=256, show_default=True)
@click.option("--min-tissue", default=0.25, show_default=True)
def features(manifest, out, tile_size, min_tissue):
    """Enumerate tissue tiles and write their 36-feature rows."""
    catalog = load_manifest(manifest)
    tiles = pl.tiles_for_catalog(catalog, size=tile_size, min_tissue=min_tissue)
    dump = pl.features_for_catalog(catalog, tiles)
    formats.write_feature_dump(out, dump)
    click.echo(f"wrote {len(dump)} feature rows ({dump.dim}-d) -> {out}")


@cli.command()
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--max-tiles", default=500, show_default=True)
@click.option("--seed", default=0, show_default=True)
def stats(manifest, out, max_tiles, seed):
    """Per-slide staining statistics in the transfer color space."""
    catalog = load_manifest(manifest)
    tiles = pl.tiles_for_catalog(catalog)
    table = pl.stain_stats_for_catalog(catalog, tiles, max_tiles=max_tiles, seed=seed)
    doc = {
        sid: {"mean": st.mean.tolist(), "std": st.std.tolist(), "patch_count": st.patch_count}
        for sid, st in table.items()
    }
    Path(out).write_text(json.dumps(doc, indent=2, sort_keys=True))
    click.echo(f"wrote stain stats for {len(doc)} slides -> {out}")


def _load_stats(path):
    doc = json.loads(Path(path).read_text())
    return {
        sid: StainStats(sid, np.array(v["mean"]), np.array(v["std"]), v["patch_count"])
        for sid, v in doc.items()
    }


@cli.command()
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--features", "features_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--k", default=100, show_default=True)
@click.option("--sample-per-slide", default=500, show_default=True)
@click.option("--max-iter", default=100, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--model-out", required=True, type=click.Path(dir_okay=False))
@click.option("--sample-out", required=True, type=click.Path(dir_okay=False))
def cluster(manifest, features_path, k, sample_per_slide, max_iter, seed, model_out, sample_out):
    """Fit k-means on a per-slide subsample of the feature rows."""
    catalog = load_manifest(manifest)
    dump = formats.read_feature_dump(features_path)
    tiles = pl.dump_tiles(dump, catalog)
    by_slide: dict[str, list[TileRef]] = {}
    for tile in tiles:
        by_slide.setdefault(tile.slide_id, []).append(tile)
    sample = cl.subsample_patches(catalog, by_slide, n_per_slide=sample_per_slide, seed=seed)
    row_of = {t: i for i, t in enumerate(tiles)}
    rows = np.array([row_of[t] for t in sample], dtype=np.int64)

    x = dump.features[rows].astype(np.float64)
    model = cl.kmeans_fit(x, k=k, max_iter=max_iter, seed=seed)
    formats.write_cluster_model(model_out, model.centroids, model.inertia)
    labels, _ = cl.assign_clusters(x, model.centroids)
    _write_label_csv(sample_out, ["row", "raw_label"], zip(rows.tolist(), labels.tolist()))
    click.echo(
        f"k-means k={k} on {len(rows)} sampled rows: inertia {model.inertia:.4f} "
        f"after {model.iterations_run} iterations -> {model_out}"
    )


@cli.command()
@click.option("--features", "features_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--sample", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--knn", default=1, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def propagate(features_path, sample, knn, out):
    """Propagate sampled cluster labels to every feature row via k-NN."""
    dump = formats.read_feature_dump(features_path)
    pairs = _read_label_csv(sample)
    rows = np.array([r for r, _ in pairs], dtype=np.int64)
    ids = np.array([l for _, l in pairs], dtype=np.int64)
    labels = cl.propagate_labels(
        dump.features[rows].astype(np.float64), ids, dump.features.astype(np.float64), knn=knn
    )
    _write_label_csv(out, ["row", "raw_label"], enumerate(labels.tolist()))
    click.echo(f"propagated labels to {len(labels)} rows -> {out}")


@cli.command()
@click.option("--labels", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--mergemap", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def merge(labels, mergemap, out):
    """Apply the expert merge map to raw cluster labels."""
    mm = cl.load_merge_map(mergemap)
    pairs = _read_label_csv(labels)
    raw = np.array([l for _, l in pairs], dtype=np.int64)
    metas = cl.apply_merge_map(raw, mm)
    _write_label_csv(out, ["row", "meta_label"], enumerate(metas.tolist()))
    kept = int((metas != cl.DROP).sum())
    click.echo(f"merged {len(metas)} rows -> {mm.n_meta} metas, {kept} kept, "
               f"{len(metas) - kept} dropped -> {out}")


@cli.command()
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--features", "features_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--metas", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def index(manifest, features_path, metas, out):
    """Build the (group x meta) sampling index."""
    catalog = _load_assigned(manifest)
    dump = formats.read_feature_dump(features_path)
    tiles = pl.dump_tiles(dump, catalog)
    meta_labels = np.array([m for _, m in _read_label_csv(metas)], dtype=np.int64)
    idx = sp.build_index(catalog, tiles, meta_labels)
    doc = {
        "tile_size": tiles[0].size if tiles else 256,
        "buckets": {
            f"{g},{c}": [[t.slide_id, t.x, t.y] for t in bucket]
            for (g, c), bucket in idx.buckets.items()
        },
    }
    Path(out).write_text(json.dumps(doc))
    click.echo(f"indexed {idx.total_tiles} tiles into {len(idx)} buckets -> {out}")


def _load_index(path):
    doc = json.loads(Path(path).read_text())
    size = doc.get("tile_size", 256)
    buckets = {}
    for key, tiles in doc["buckets"].items():
        g, c = (int(v) for v in key.split(","))
        buckets[(g, c)] = [TileRef(sid, int(x), int(y), size) for sid, x, y in tiles]
    return sp.SamplerIndex(buckets)


@cli.command()
@click.option("--index", "index_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--weights", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--n", default=1000, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--offset", default=0, show_default=True)
@click.option("--mode", type=click.Choice(["joint", "two-stage"]), default="joint", show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
@click.option("--freq-out", type=click.Path(dir_okay=False), default=None,
              help="Also write empirical vs target bucket frequencies as CSV.")
def sample(index_path, weights, n, seed, offset, mode, out, freq_out):
    """Draw a weighted training sample from the index."""
    idx = _load_index(index_path)
    table = sp.load_weight_table(weights)
    drawn = sp.draw(idx, table, n, seed=seed, offset=offset, mode=mode)
    _write_label_csv(out, ["slide_id", "x", "y"], [(t.slide_id, t.x, t.y) for t in drawn])
    if freq_out:
        target = sp.target_distribution(idx, table, mode=mode)
        bucket_of = {t: key for key, tiles in idx.buckets.items() for t in tiles}
        counts: dict[tuple[int, int], int] = {}
        for t in drawn:
            counts[bucket_of[t]] = counts.get(bucket_of[t], 0) + 1
        with open(freq_out, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["group", "meta", "target", "empirical"])
            for key in sorted(idx.buckets):
                writer.writerow(
                    [key[0], key[1], target.get(key, 0.0), counts.get(key, 0) / max(n, 1)]
                )
    click.echo(f"drew {n} tiles -> {out}")


@cli.command()
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--stats", "stats_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--tile", default=None, help="slide_id,x,y of a specific tile to augment.")
@click.option("--count", default=4, show_default=True, help="Random tiles when --tile is absent.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
def augment(manifest, stats_path, tile, count, seed, out):
    """Write before/after stain-transfer view pairs for visual audit."""
    from PIL import Image

    catalog = load_manifest(manifest)
    table = _load_stats(stats_path)
    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)

    if tile:
        sid, x, y = tile.split(",")
        chosen = [TileRef(sid, int(x), int(y))]
    else:
        tiles = pl.tiles_for_catalog(catalog)
        flat = [t for rec in catalog for t in tiles[rec.slide_id]]
        rng = np.random.default_rng(seed)
        chosen = [flat[int(i)] for i in rng.choice(len(flat), size=min(count, len(flat)), replace=False)]

    for i, t in enumerate(chosen):
        before = read_tile(catalog, t)
        after = augment_view(t, catalog, table, seed=seed + i)
        Image.fromarray(before).save(out_dir / f"{i:03d}_before_{t.slide_id}_{t.x}_{t.y}.png")
        Image.fromarray(after).save(out_dir / f"{i:03d}_after_{t.slide_id}_{t.x}_{t.y}.png")
    click.echo(f"wrote {len(chosen)} before/after pairs -> {out}")


def _make_embedder(name, dim, seed):
    if name == "feature":
        return rt.FeatureEmbedder()
    if name == "random-projection":
        return rt.RandomProjectionEmbedder(dim, seed=seed)
    raise click.UsageError(f"unknown embedder {name!r}")


@cli.command()
@click.option("--manifest", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--features", "features_path", default=None, type=click.Path(exists=True, dir_okay=False),
              help="Reuse a feature dump instead of re-reading images.")
@click.option("--embedder", default="feature", type=click.Choice(["feature", "random-projection"]),
              show_default=True)
@click.option("--dim", default=36, show_default=True, help="Output dim for random-projection.")
@click.option("--seed", default=0, show_default=True)
@click.option("--out", required=True, type=click.Path(dir_okay=False))
def embed(manifest, features_path, embedder, dim, seed, out):
    """Build the per-slide embedding store."""
    catalog = load_manifest(manifest)
    emb = _make_embedder(embedder, dim, seed)
    if features_path:
        dump = formats.read_feature_dump(features_path)
        store = rt.store_from_features(catalog, dump, emb, out_path=out)
    else:
        tiles = pl.tiles_for_catalog(catalog)
        store = rt.build_store(catalog, tiles, emb, out_path=out)
    click.echo(f"stored {store.total_tiles} embeddings ({store.dim}-d) for {len(store)} slides -> {out}")


def _load_roi(path):
    doc = json.loads(Path(path).read_text())
    return rt.QueryROI(doc["slide_id"], [(t["x"], t["y"]) for t in doc["tiles"]])


@cli.command()
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--roi", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--k", default=5, show_default=True, help="Patch-level top-k for the slide score.")
@click.option("--top", "topn", default=10, show_default=True)
@click.option("--include-self", is_flag=True, default=False)
@click.option("--out", default=None, type=click.Path(dir_okay=False))
def query(store_path, roi, k, topn, include_self, out):
    """Rank candidate slides against an ROI query."""
    store = rt.EmbeddingStore.load(store_path)
    result = rt.query_topn(store, _load_roi(roi), k=k, topn=topn, include_self=include_self)
    payload = {
        "results": [
            {"rank": i + 1, "slide_id": e.slide_id, "score": e.score, "diagnosis": e.diagnosis}
            for i, e in enumerate(result.entries)
        ]
    }
    text = json.dumps(payload, indent=2)
    if out:
        Path(out).write_text(text)
    click.echo(text)


@cli.command("eval-retrieval")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--k", default=5, show_default=True)
@click.option("--accuracy-ks", default="1,10", show_default=True)
@click.option("--roi-tiles", default=0, show_default=True, help="ROI size per query; 0 = all tiles.")
@click.option("--out", default=None, type=click.Path(dir_okay=False))
def eval_retrieval(store_path, k, accuracy_ks, roi_tiles, out):
    """Query every diagnosed slide against the rest; report top-k accuracy."""
    store = rt.EmbeddingStore.load(store_path)
    ks = tuple(int(v) for v in accuracy_ks.split(","))
    results, truths = [], []
    for slide in store.slides:
        if not slide.diagnosis:
            continue
        coords = slide.coords if roi_tiles <= 0 else slide.coords[:roi_tiles]
        roi = rt.QueryROI(slide.slide_id, [(int(x), int(y)) for x, y in coords])
        results.append(rt.query_topn(store, roi, k=k, topn=max(ks)))
        truths.append(slide.diagnosis)
    acc = rt.topk_accuracy(results, truths, k_list=ks)
    lines = [f"top-{kk},{acc[kk]:.4f}" for kk in ks]
    body = "k,accuracy\n" + "\n".join(lines) + "\n"
    if out:
        Path(out).write_text(body)
    click.echo(body.strip())


@cli.command("concept-map")
@click.option("--store", "store_path", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--components", default=4, show_default=True)
@click.option("--component", default=0, show_default=True, help="Component index to render.")
@click.option("--tile-size", default=256, show_default=True)
@click.option("--out", required=True, type=click.Path(file_okay=False))
def concept_map(store_path, components, component, tile_size, out):
    """PCA concept heatmaps over all slides in a store."""
    from PIL import Image

    store = rt.EmbeddingStore.load(store_path)
    positions, vectors, owners = [], [], []
    for slide in store.slides:
        for (x, y), vec in zip(slide.coords, slide.vectors):
            positions.append((int(x) // tile_size, int(y) // tile_size))
            vectors.append(vec)
            owners.append(slide.slide_id)
    centered = cmap.positional_mean_subtract(positions, np.asarray(vectors, dtype=np.float64))
    comps, eigenvalues = cmap.pca_fit(centered, components)
    scores = cmap.project(centered, comps)[:, component]

    out_dir = Path(out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with open(out_dir / "eigenvalues.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["component", "eigenvalue"])
        writer.writerows(enumerate(eigenvalues.tolist()))

    for slide in store.slides:
        rows = [i for i, sid in enumerate(owners) if sid == slide.slide_id]
        pos = [positions[i] for i in rows]
        nx = max(p[0] for p in pos) + 1
        ny = max(p[1] for p in pos) + 1
        grid = np.zeros((ny, nx))
        for i, (gx, gy) in zip(rows, pos):
            grid[gy, gx] = scores[i]
        Image.fromarray(cmap.component_heatmap(grid)).save(
            out_dir / f"{slide.slide_id}_component{component}.png"
        )
    click.echo(f"wrote {len(store)} concept maps and eigenvalues.csv -> {out}")


@cli.command()
@click.option("--embeddings", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--labels", required=True, type=click.Path(exists=True, dir_okay=False))
@click.option("--lr", default=5e-5, show_default=True)
@click.option("--batch-size", default=128, show_default=True)
@click.option("--epochs", default=10, show_default=True)
@click.option("--weight-decay", default=0.0, show_default=True)
@click.option("--sweep-lr", default=None, help="Comma list of learning rates to grid over.")
@click.option("--sweep-wd", default=None, help="Comma list of weight decays to grid over.")
@click.option("--val-frac", default=0.1, show_default=True)
@click.option("--seed", default=0, show_default=True)
@click.option("--out", default=None, type=click.Path(dir_okay=False))
def probe(embeddings, labels, lr, batch_size, epochs, weight_decay, sweep_lr, sweep_wd, val_frac, seed, out):
    """Linear-probe a labeled embedding dump and report metrics."""
    dump = formats.read_feature_dump(embeddings)
    pairs = _read_label_csv(labels)
    y = np.full(len(dump), -1, dtype=np.int64)
    for row, label in pairs:
        y[row] = label
    keep = y >= 0
    x = dump.features[keep].astype(np.float64)
    y = y[keep]

    rng = np.random.default_rng(seed)
    perm = rng.permutation(len(y))
    n_val = max(1, int(len(y) * val_frac))
    val_rows, train_rows = perm[:n_val], perm[n_val:]

    lrs = [float(v) for v in sweep_lr.split(",")] if sweep_lr else [lr]
    wds = [float(v) for v in sweep_wd.split(",")] if sweep_wd else [weight_decay]
    best = None
    for trial_lr in lrs:
        for trial_wd in wds:
            cfg = pb.TrainConfig(
                learning_rate=trial_lr, batch_size=batch_size, epochs=epochs,
                weight_decay=trial_wd, seed=seed,
            )
            model = pb.train_probe(x[train_rows], y[train_rows], cfg)
            val_acc = pb.balanced_accuracy(model.predict(x[val_rows]), y[val_rows])
            if best is None or val_acc > best[0]:
                best = (val_acc, trial_lr, trial_wd, model)

    val_acc, best_lr, best_wd, model = best
    val_preds = model.predict(x[val_rows])
    rows = [
        ("learning_rate", best_lr),
        ("weight_decay", best_wd),
        ("train_balanced_accuracy", pb.balanced_accuracy(model.predict(x[train_rows]), y[train_rows])),
        ("val_balanced_accuracy", val_acc),
        ("val_macro_f1", pb.macro_f1(val_preds, y[val_rows])),
    ]
    rows += [
        (f"val_f1_class_{c}", f1)
        for c, f1 in enumerate(pb.per_class_f1(val_preds, y[val_rows]))
    ]
    body = "metric,value\n" + "\n".join(f"{k},{v}" for k, v in rows) + "\n"
    if out:
        Path(out).write_text(body)
    click.echo(body.strip())
    click.echo(
        f"probe: lr={best_lr:g} wd={best_wd:g} -> "
        f"validation balanced accuracy {val_acc:.4f} on {len(val_rows)} held-out rows"
    )


@cli.command()
@click.option("--store", "store_path", required=True, envvar="HISTOCURATE_STORE",
              type=click.Path(exists=True, dir_okay=False))
@click.option("--manifest", required=True, envvar="HISTOCURATE_MANIFEST",
              type=click.Path(exists=True, dir_okay=False))
@click.option("--host", default="127.0.0.1", envvar="HISTOCURATE_HOST", show_default=True)
@click.option("--port", default=8800, envvar="HISTOCURATE_PORT", show_default=True)
@click.option("--k", default=5, envvar="HISTOCURATE_K", show_default=True)
@click.option("--hide-diagnoses", is_flag=True, default=False, envvar="HISTOCURATE_HIDE_DIAGNOSES",
              help="Withhold diagnoses in slide listings (evaluation mode).")
@click.option("--frontend", default=None, envvar="HISTOCURATE_FRONTEND",
              type=click.Path(exists=True, file_okay=False),
              help="Directory of static UI files to serve at /.")
def serve(store_path, manifest, host, port, k, hide_diagnoses, frontend):
    """Run the reference-case-search HTTP service."""
    import uvicorn

    from .service import ServiceConfig, create_app

    config = ServiceConfig(
        store_path=store_path, manifest_path=manifest, default_k=k,
        hide_diagnoses=hide_diagnoses, frontend_dir=frontend,
    )
    uvicorn.run(create_app(config), host=host, port=port, log_level="info")


@cli.command()
@click.option("--out", required=True, type=click.Path(file_okay=False))
@click.option("--slides", default=40, show_default=True)
@click.option("--diagnoses", default=5, show_default=True)
@click.option("--size", default=1024, show_default=True)
@click.option("--labs", default=3, show_default=True)
@click.option("--tissues", default=2, show_default=True)
@click.option("--variety", is_flag=True, default=False,
              help="Cycle 31 metadata profiles for grouping experiments.")
@click.option("--clusters", default=10, show_default=True, help="Raw clusters in the merge-map template.")
@click.option("--metas", default=3, show_default=True, help="Meta clusters in the merge-map template.")
@click.option("--seed", default=0, show_default=True)
def synth(out, slides, diagnoses, size, labs, tissues, variety, clusters, metas, seed):
    """Generate a synthetic slide corpus with known ground truth."""
    spec = sy.SynthSpec(
        slides=slides, diagnoses=diagnoses, size=size, labs=labs, tissues=tissues,
        variety=variety, seed=seed,
    )
    manifest = sy.generate_corpus(out, spec, clusters=clusters, metas=metas)
    click.echo(f"generated {slides} slides -> {manifest}")


def main(argv=None):
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.exceptions.Exit as exc:
        return exc.exit_code
    except click.exceptions.Abort:
        return 130
    except click.UsageError as exc:
        exc.show()
        return 1
    except (HistocurateError, OSError) as exc:
        click.echo(f"error: {exc}", err=True)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
