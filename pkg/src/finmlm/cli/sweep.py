"""Ablation sweeps over the financial-share and stage-split axes.

Each cell pretrains from scratch for every seed and reports the mean final
validation perplexity; the table mirrors the two published ablation layouts
(4 fin-share rows, 5 stage-split rows, 3 seeds averaged per cell). Whether
the expected orderings hold is reported, never gated on.
"""

from __future__ import annotations

import concurrent.futures
import dataclasses
from dataclasses import dataclass
from ..errors import ConfigError
from ..masking import MaskingPolicy, Stage
from ..tinymodel import pretrain

FIN_SHARE_VALUES = ("0.1", "0.2", "0.3", "0.4")
STAGE_SPLIT_VALUES = ("4:0", "3:1", "2:2", "1:3", "0:4")
EXPECTED_BEST = {"fin-share": "0.3", "stage-split": "2:2"}


@dataclass(frozen=True)
class SweepSpec:
    axis: str  # "fin-share" | "stage-split"
    values: tuple[str, ...]
    seeds: tuple[int, ...]
    epochs: int = 4
    word_only_epochs: int = 2

    def __post_init__(self):
        if self.axis not in ("fin-share", "stage-split"):
            raise ConfigError(f"unknown sweep axis {self.axis!r}")
        if not self.values:
            raise ConfigError("sweep needs at least one axis value")
        if not self.seeds:
            raise ConfigError("sweep needs at least one seed")


def default_spec(axis: str, base_seed: int, n_seeds: int, epochs: int = 4) -> SweepSpec:
    values = FIN_SHARE_VALUES if axis == "fin-share" else STAGE_SPLIT_VALUES
    return SweepSpec(
        axis=axis,
        values=values,
        seeds=tuple(base_seed + i for i in range(n_seeds)),
        epochs=epochs,
    )


def _cell_policy_and_split(
    spec: SweepSpec, value: str, base_policy: MaskingPolicy
) -> tuple[MaskingPolicy, int]:
    if spec.axis == "fin-share":
        return dataclasses.replace(base_policy, fin_share=float(value)), spec.word_only_epochs
    word_only, with_phrase = (int(x) for x in value.split(":"))
    if word_only + with_phrase != spec.epochs:
        raise ConfigError(
            f"stage split {value} does not sum to {spec.epochs} epochs"
        )
    return base_policy, word_only


def _run_cell(job: dict) -> dict:
    """One (value, seed) training run; returns the final validation ppl."""
    spec: SweepSpec = job["spec"]
    policy, word_only = _cell_policy_and_split(spec, job["value"], job["policy"])
    result = pretrain(
        job["corpus_tokens"],
        job["val_tokens"],
        job["lexicon"],
        job["vocab"],
        job["special"],
        policy,
        job["config"],
        job["weights"],
        epochs=spec.epochs,
        word_only_epochs=word_only,
        seed=job["seed"],
        lr=job["lr"],
        eval_policy=job["eval_policy"],
    )
    return {"ppl": result.epoch_ppl[-1], "baseline": result.baseline_ppl}


def run_sweep(
    spec: SweepSpec,
    corpus_tokens: list[list[int]],
    val_tokens: list[list[int]],
    lexicon,
    vocab,
    special,
    base_policy: MaskingPolicy,
    config,
    weights,
    lr: float = 1e-3,
    workers: int = 1,
) -> dict:
    """All cells of the sweep; failed cells are marked and the sweep continues.

    Validation masking is fixed (the base policy at WORD_ONLY with one eval
    seed) so cells are scored on the same prediction task.
    """
    eval_policy = base_policy.with_stage(Stage.WORD_ONLY)
    jobs = []
    for value in spec.values:
        for seed in spec.seeds:
            jobs.append(
                {
                    "spec": spec,
                    "value": value,
                    "seed": seed,
                    "corpus_tokens": corpus_tokens,
                    "val_tokens": val_tokens,
                    "lexicon": lexicon,
                    "vocab": vocab,
                    "special": special,
                    "policy": base_policy,
                    "eval_policy": eval_policy,
                    "config": config,
                    "weights": weights,
                    "lr": lr,
                }
            )

    outcomes: list[dict | Exception] = [None] * len(jobs)  # type: ignore[list-item]
    if workers > 1:
        with concurrent.futures.ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(_run_cell, job): i for i, job in enumerate(jobs)}
            for fut in concurrent.futures.as_completed(futures):
                i = futures[fut]
                try:
                    outcomes[i] = fut.result()
                except Exception as exc:
                    outcomes[i] = exc
    else:
        for i, job in enumerate(jobs):
            try:
                outcomes[i] = _run_cell(job)
            except Exception as exc:
                outcomes[i] = exc

    cells = []
    k = 0
    for value in spec.values:
        per_seed = []
        errors = []
        for _seed in spec.seeds:
            out = outcomes[k]
            k += 1
            if isinstance(out, Exception):
                errors.append(f"{type(out).__name__}: {out}")
            else:
                per_seed.append(out["ppl"])
        failed = bool(errors)
        cells.append(
            {
                "value": value,
                "per_seed_ppl": per_seed,
                "mean_ppl": sum(per_seed) / len(per_seed) if per_seed else None,
                "failed": failed,
                "errors": errors,
            }
        )

    scored = [c for c in cells if c["mean_ppl"] is not None]
    observed_best = min(scored, key=lambda c: c["mean_ppl"])["value"] if scored else None
    expected_best = EXPECTED_BEST[spec.axis]
    return {
        "axis": spec.axis,
        "seeds": list(spec.seeds),
        "epochs": spec.epochs,
        "cells": cells,
        "expected_best": expected_best,
        "observed_best": observed_best,
        "expected_ordering_holds": observed_best == expected_best,
    }


def format_table(report: dict) -> str:
    """Aligned text table: one row per axis value, mean over seeds."""
    axis = report["axis"]
    header = "% financial terms masked" if axis == "fin-share" else "word-only : word+phrase epochs"
    lines = [
        f"{header:<32}  mean ppl   per-seed ({len(report['seeds'])} seeds)",
        "-" * 72,
    ]
    for cell in report["cells"]:
        if cell["failed"] and cell["mean_ppl"] is None:
            body = "FAILED"
            tail = "; ".join(cell["errors"])
        else:
            body = f"{cell['mean_ppl']:.2f}"
            tail = ", ".join(f"{p:.2f}" for p in cell["per_seed_ppl"])
            if cell["failed"]:
                tail += "  (some seeds failed)"
        marker = " *" if cell["value"] == report["observed_best"] else "  "
        lines.append(f"{cell['value']:<32}  {body:<9}{marker} {tail}")
    lines.append("-" * 72)
    lines.append(
        f"expected best {report['expected_best']}; observed best {report['observed_best']}; "
        f"ordering {'holds' if report['expected_ordering_holds'] else 'does not hold'}"
    )
    return "\n".join(lines)
