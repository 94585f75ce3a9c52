"""Metrics, the robustness score, and the evaluation protocols.

The robustness score of a (clean, adversarial) accuracy pair is their ratio
acc_adv / acc_clean; it is undefined (None, rendered as an em dash) when the
clean accuracy is zero, and may exceed 1 when an attacked model outperforms
its clean baseline. ``evaluate_protocol`` fills the full method x dataset x
setting grid the way the headline tables are laid out, regenerating
adversarial examples against each evaluated model (white-box contract).
"""

from __future__ import annotations

import io
import json
from dataclasses import dataclass, field

import numpy as np

from .attacks import AttackConfig, pgd, pgd_through_dire
from .datasets import Dataset
from .errors import ContractError, ProtocolError
from .models import DetectorModel

SETTINGS = ("wo_at", "w_at")
SCHEMA_VERSION = 1
UNDEFINED_MARK = "—"  # em dash for undefined scores


def accuracy(predictions: np.ndarray, truth: np.ndarray) -> float:
    predictions = np.asarray(predictions)
    truth = np.asarray(truth)
    if predictions.shape != truth.shape or predictions.ndim != 1:
        raise ContractError(
            f"prediction/truth shapes differ: {predictions.shape} vs {truth.shape}"
        )
    if predictions.size == 0:
        raise ContractError("accuracy of an empty prediction vector is undefined")
    return float((predictions == truth).mean())


def robustness_score(acc_adv: float, acc_clean: float) -> float | None:
    """acc_adv / acc_clean, or None when the clean accuracy is zero."""
    for name, v in (("acc_adv", acc_adv), ("acc_clean", acc_clean)):
        if not 0.0 <= v <= 1.0:
            raise ContractError(f"{name} must lie in [0, 1], got {v}")
    if acc_clean == 0.0:
        return None
    return acc_adv / acc_clean


@dataclass(frozen=True)
class EvalCell:
    acc_clean: float
    acc_adv: float
    robustness_score: float | None
    n_examples: int = 0
    attacked_model_id: str = ""

    @classmethod
    def from_accuracies(cls, acc_clean: float, acc_adv: float, n: int = 0, model_id: str = ""):
        return cls(acc_clean, acc_adv, robustness_score(acc_adv, acc_clean), n, model_id)


@dataclass(frozen=True)
class MethodEntry:
    """One (method, setting) column of the evaluation grid."""

    method: str  # "pixel-conv" | "pixel-attention" | "dire"
    setting: str  # "wo_at" | "w_at"
    model: DetectorModel
    trained_on: tuple[str, ...]
    dire_schedule: object | None = None
    dire_predictor: object | None = None
    dire_scale: float | None = None
    surrogate: DetectorModel | None = None

    def __post_init__(self):
        if self.setting not in SETTINGS:
            raise ContractError(f"setting must be one of {SETTINGS}, got {self.setting!r}")
        if self.method == "dire" and (self.dire_schedule is None or self.dire_predictor is None):
            raise ContractError("dire entries need a diffusion schedule and predictor")


@dataclass
class EvalReport:
    protocol: str
    attack: dict
    cells: dict[tuple[str, str, str], EvalCell] = field(default_factory=dict)
    trained_on: dict[tuple[str, str], tuple[str, ...]] = field(default_factory=dict)
    heldout: tuple[str, ...] = ()
    schema_version: int = SCHEMA_VERSION

    @property
    def methods(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(m for m, _, _ in self.cells))

    @property
    def datasets(self) -> tuple[str, ...]:
        return tuple(dict.fromkeys(d for _, d, _ in self.cells))

    def __eq__(self, other) -> bool:
        if not isinstance(other, EvalReport):
            return NotImplemented
        return (
            self.protocol == other.protocol
            and self.attack == other.attack
            and self.cells == other.cells
            and self.trained_on == other.trained_on
            and self.heldout == other.heldout
            and self.schema_version == other.schema_version
        )


def _dire_inputs(entry: MethodEntry, x: np.ndarray) -> np.ndarray:
    from .diffusion import dire_features

    return dire_features(x, entry.dire_schedule, entry.dire_predictor, entry.dire_scale)


def evaluate_entry_on(
    entry: MethodEntry,
    dataset: Dataset,
    attack: AttackConfig,
    rng: np.random.Generator,
) -> EvalCell:
    """Clean and adversarial accuracy of one model on one test split."""
    x, y = dataset.images, dataset.labels
    model = entry.model
    if entry.method == "dire":
        preds_clean = model.predict(_dire_inputs(entry, x))
        x_adv = pgd_through_dire(
            model,
            x,
            y,
            attack,
            entry.dire_schedule,
            entry.dire_predictor,
            entry.dire_scale,
            surrogate=entry.surrogate,
            rng=rng,
        )
        preds_adv = model.predict(_dire_inputs(entry, x_adv))
    else:
        preds_clean = model.predict(x)
        x_adv = pgd(model, x, y, attack, rng=rng)
        preds_adv = model.predict(x_adv)
    return EvalCell.from_accuracies(
        accuracy(preds_clean, y), accuracy(preds_adv, y), n=len(dataset), model_id=model.param_hash()
    )


def evaluate_protocol(
    entries: list[MethodEntry],
    datasets: list[Dataset],
    attack: AttackConfig,
    protocol: str,
    heldout: tuple[str, ...] = (),
    attack_seed: int = 0,
) -> EvalReport:
    """Fill the (method, dataset, setting) accuracy grid for one protocol.

    Adversarial examples are regenerated against each evaluated model on the
    dataset's test split. The cross-domain protocol additionally asserts
    that no held-out dataset contributed training batches to any entry.
    """
    if protocol not in ("all-set", "cross-domain"):
        raise ProtocolError(f"unknown protocol {protocol!r}")
    for ds in datasets:
        if ds.split != "test":
            raise ProtocolError(f"dataset {ds.name!r} has no test split (split={ds.split!r})")
    if protocol == "cross-domain":
        if not heldout:
            raise ProtocolError("cross-domain protocol requires a non-empty heldout set")
        for entry in entries:
            leaked = set(heldout) & set(entry.trained_on)
            if leaked:
                raise ProtocolError(
                    f"held-out datasets {sorted(leaked)} contributed training batches to "
                    f"({entry.method}, {entry.setting})"
                )
    report = EvalReport(
        protocol=protocol,
        attack={
            "epsilon": attack.epsilon,
            "step_size": attack.step_size,
            "num_steps": attack.num_steps,
            "random_init": attack.random_init,
            "norm": attack.norm,
            "grad_mode": attack.grad_mode,
            "seed": attack_seed,
        },
        heldout=tuple(heldout),
    )
    seen = set()
    for entry in entries:
        key = (entry.method, entry.setting)
        if key in seen:
            raise ProtocolError(f"duplicate entry for {key}")
        seen.add(key)
        report.trained_on[key] = tuple(entry.trained_on)
        for ds in datasets:
            before = entry.model.param_hash()
            rng = np.random.default_rng(attack_seed)
            cell = evaluate_entry_on(entry, ds, attack, rng)
            if entry.model.param_hash() != before:
                raise ProtocolError("evaluation mutated model parameters")
            report.cells[(entry.method, ds.name, entry.setting)] = cell
    return report


# ---------------------------------------------------------------------------
# rendering


def _fmt_pct(v: float) -> str:
    return f"{100.0 * v:.2f}%"


def _fmt_score(v: float | None) -> str:
    return UNDEFINED_MARK if v is None else f"{v:.2f}"


def render_report(report: EvalReport, fmt: str) -> str:
    """Serialize a report as csv, json, or a markdown table."""
    if fmt == "csv":
        return _render_csv(report)
    if fmt == "json":
        return _render_json(report)
    if fmt == "markdown-table":
        return _render_markdown(report)
    raise ContractError(f"unknown report format {fmt!r}")


def _render_csv(report: EvalReport) -> str:
    out = io.StringIO()
    out.write("method,dataset,setting,acc_clean,acc_adv,robustness_score\n")
    for (m, d, s) in sorted(report.cells):
        c = report.cells[(m, d, s)]
        score = "" if c.robustness_score is None else repr(c.robustness_score)
        out.write(f"{m},{d},{s},{c.acc_clean!r},{c.acc_adv!r},{score}\n")
    return out.getvalue()


def _render_json(report: EvalReport) -> str:
    doc = {
        "schema_version": report.schema_version,
        "protocol": report.protocol,
        "attack": report.attack,
        "heldout": list(report.heldout),
        "trained_on": [
            {"method": m, "setting": s, "datasets": list(v)}
            for (m, s), v in sorted(report.trained_on.items())
        ],
        "cells": [
            {
                "method": m,
                "dataset": d,
                "setting": s,
                "acc_clean": c.acc_clean,
                "acc_adv": c.acc_adv,
                "robustness_score": c.robustness_score,
                "n_examples": c.n_examples,
                "attacked_model_id": c.attacked_model_id,
            }
            for (m, d, s) in sorted(report.cells)
            for c in [report.cells[(m, d, s)]]
        ],
    }
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def parse_report_json(text: str) -> EvalReport:
    doc = json.loads(text)
    report = EvalReport(
        protocol=doc["protocol"],
        attack=doc["attack"],
        heldout=tuple(doc["heldout"]),
        schema_version=doc["schema_version"],
    )
    for rec in doc["trained_on"]:
        report.trained_on[(rec["method"], rec["setting"])] = tuple(rec["datasets"])
    for rec in doc["cells"]:
        report.cells[(rec["method"], rec["dataset"], rec["setting"])] = EvalCell(
            acc_clean=rec["acc_clean"],
            acc_adv=rec["acc_adv"],
            robustness_score=rec["robustness_score"],
            n_examples=rec["n_examples"],
            attacked_model_id=rec["attacked_model_id"],
        )
    return report


def _render_markdown(report: EvalReport) -> str:
    """Headline-table layout: one row per (method, dataset), six value columns."""
    pairs = list(dict.fromkeys((m, d) for (m, d, _) in sorted(report.cells)))
    missing = [
        (m, d, s)
        for (m, d) in pairs
        for s in SETTINGS
        if (m, d, s) not in report.cells and any((m2, d2, s) in report.cells for (m2, d2, s2) in [])
    ]
    lines = [
        "| Method | Dataset | Clean w/o AT | Clean w/ AT | Adv w/o AT | Adv w/ AT | Score w/o AT | Score w/ AT |",
        "| --- | --- | --- | --- | --- | --- | --- | --- |",
    ]
    for m, d in pairs:
        row = [m, d]
        for group in ("clean", "adv", "score"):
            for s in SETTINGS:
                cell = report.cells.get((m, d, s))
                if cell is None:
                    row.append(UNDEFINED_MARK)
                elif group == "clean":
                    row.append(_fmt_pct(cell.acc_clean))
                elif group == "adv":
                    row.append(_fmt_pct(cell.acc_adv))
                else:
                    row.append(_fmt_score(cell.robustness_score))
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def check_complete(report: EvalReport, methods, datasets, settings=SETTINGS) -> None:
    """Raise with the missing-cell list if any expected cell is absent."""
    missing = [
        (m, d, s)
        for m in methods
        for d in datasets
        for s in settings
        if (m, d, s) not in report.cells
    ]
    if missing:
        raise ProtocolError(f"report is missing {len(missing)} cells: {missing}")
