"""JSON model files, family specs, observation sequences and output formats."""

from __future__ import annotations

import csv
import hashlib
import io
import json
from pathlib import Path
from typing import Any, Mapping, Sequence

import numpy as np

from .core import Alphabet, PmmModel, ensure_valid
from .errors import ValidationError
from .zoo import (
    RegimeSwitchingSpec,
    RelatedChainsParams,
    SemiMarkovRegimeSpec,
    SemiMarkovSpec,
    build_regime_switching,
    build_related_chains,
    build_semi_markov,
    build_semi_markov_regime,
    three_regime_spec,
)

LOAD_TOL = 1e-9
FAMILIES = ("explicit", "related_chains", "regime_switching", "semi_markov", "semi_markov_regime")


def _require(spec: Mapping, key: str, family: str):
    if key not in spec:
        raise ValidationError(f"{family} spec is missing {key!r}")
    return spec[key]


def _inter_regime(raw) -> dict | None:
    if raw is None:
        return None
    out = {}
    for key, m in raw.items():
        a, sep, b = key.partition("->")
        if not sep:
            raise ValidationError(f"inter-regime key {key!r} must look like 'A->B'")
        out[(a.strip(), b.strip())] = np.asarray(m, dtype=float)
    return out


def _semi_spec(raw: Mapping, family: str) -> SemiMarkovSpec:
    return SemiMarkovSpec(
        states=list(_require(raw, "states", family)),
        jump=np.asarray(_require(raw, "jump", family), dtype=float),
        sojourn={k: list(v) for k, v in _require(raw, "sojourn", family).items()},
        k_max=int(_require(raw, "k_max", family)),
    )


def model_from_spec(spec: Mapping[str, Any]) -> PmmModel:
    """Expand a model JSON object (any family) into an explicit :class:`PmmModel`.

    Families other than ``explicit`` start from their stationary distribution
    unless ``initial`` is given.
    """
    family = spec.get("family", "explicit")
    initial = spec.get("initial")
    if family == "explicit":
        x_labels = _require(spec, "x_alphabet", family)
        y_labels = _require(spec, "y_alphabet", family)
        kernel = _require(spec, "kernel", family)
        if initial is None:
            raise ValidationError("explicit spec is missing 'initial'")
        if "support" in spec:
            model = PmmModel(Alphabet(x_labels), Alphabet(y_labels),
                             [tuple(z) for z in spec["support"]], initial, kernel)
        else:
            model = PmmModel.full(x_labels, y_labels, initial, kernel)
    elif family == "related_chains":
        params = _require(spec, "params", family)
        try:
            model = build_related_chains(RelatedChainsParams(**params), initial=initial)
        except TypeError as exc:
            raise ValidationError(f"related_chains params: {exc}") from None
    elif family == "regime_switching":
        if "three_regime" in spec:
            kw = dict(spec["three_regime"])
            r_b = kw.pop("r_b")
            rs = three_regime_spec(r_b, **kw, inter_regime=_inter_regime(spec.get("inter_regime")))
        else:
            rs = RegimeSwitchingSpec(
                regimes=list(_require(spec, "regimes", family)),
                x_labels=list(_require(spec, "x_alphabet", family)),
                regime_kernel=np.asarray(_require(spec, "regime_kernel", family), dtype=float),
                in_regime={k: np.asarray(v, dtype=float) for k, v in _require(spec, "in_regime", family).items()},
                inter_regime=_inter_regime(spec.get("inter_regime")),
            )
        model = build_regime_switching(rs, initial=initial)
    elif family == "semi_markov":
        model = build_semi_markov(_semi_spec(spec, family), initial=initial)
    elif family == "semi_markov_regime":
        sm = SemiMarkovRegimeSpec(
            semi=_semi_spec(_require(spec, "semi", family), family),
            x_labels=list(_require(spec, "x_alphabet", family)),
            in_regime={k: np.asarray(v, dtype=float) for k, v in _require(spec, "in_regime", family).items()},
            inter_regime=_inter_regime(spec.get("inter_regime")),
        )
        model = build_semi_markov_regime(sm, initial=initial)
    else:
        raise ValidationError(f"unknown model family {family!r}; expected one of {', '.join(FAMILIES)}")
    ensure_valid(model, tol=LOAD_TOL)
    return model


def assumptions(spec: Mapping[str, Any]) -> list[str]:
    """Modelling assumptions implied by a spec, stamped into experiment output."""
    out = []
    family = spec.get("family", "explicit")
    if family != "explicit" and spec.get("initial") is None:
        out.append("initial distribution: stationary")
    if family in ("regime_switching", "semi_markov_regime") and spec.get("inter_regime") is None:
        out.append("inter-regime matrices: new-regime choice P_ab = P_b")
    return out


def model_to_dict(model: PmmModel) -> dict:
    return {
        "family": "explicit",
        "x_alphabet": list(model.x_alphabet.labels),
        "y_alphabet": list(model.y_alphabet.labels),
        "support": [list(z) for z in model.support],
        "initial": model.initial.tolist(),
        "kernel": model.kernel.tolist(),
    }


def canonical_json(obj) -> str:
    return json.dumps(obj, sort_keys=True, separators=(",", ":"))


def model_hash(model: PmmModel) -> str:
    return hashlib.sha256(canonical_json(model_to_dict(model)).encode()).hexdigest()


def read_json(path: str | Path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def write_json(path: str | Path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def load_model(path: str | Path) -> PmmModel:
    return model_from_spec(read_json(path))


def save_model(path: str | Path, model: PmmModel) -> None:
    write_json(path, model_to_dict(model))


# -- sequences ------------------------------------------------------------------


def parse_sequence(text: str, labels: Sequence[str], index_mode: bool) -> np.ndarray:
    """Parse an observation or hidden sequence.

    Accepted forms: a JSON array, or symbols separated by commas, whitespace
    or newlines.  ``index_mode`` selects integer indices instead of labels.
    """
    text = text.strip()
    if text.startswith("["):
        tokens = [str(t) for t in json.loads(text)]
    else:
        tokens = [t for t in text.replace(",", " ").split() if t]
    if not tokens:
        raise ValidationError("empty sequence")
    if index_mode:
        try:
            seq = np.array([int(t) for t in tokens], dtype=np.intp)
        except ValueError as exc:
            raise ValidationError(f"non-integer token in index-mode sequence: {exc}") from None
        if seq.min() < 0 or seq.max() >= len(labels):
            raise ValidationError(f"index outside 0..{len(labels) - 1}")
        return seq
    lookup = {lab: i for i, lab in enumerate(labels)}
    try:
        return np.array([lookup[t] for t in tokens], dtype=np.intp)
    except KeyError as exc:
        raise ValidationError(f"unknown symbol {exc.args[0]!r}; known: {list(labels)}") from None


def load_sequence(path: str | Path, labels: Sequence[str], index_mode: bool) -> np.ndarray:
    return parse_sequence(Path(path).read_text(encoding="utf-8"), labels, index_mode)


def csv_text(header: Sequence[str], rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def marginals_csv(probs: np.ndarray, y_labels: Sequence[str]) -> str:
    rows = [(t + 1, y_labels[y], repr(float(probs[t, y])))
            for t in range(probs.shape[0]) for y in range(probs.shape[1])]
    return csv_text(("t", "y", "prob"), rows)


def path_csv(decoded: np.ndarray, y_labels: Sequence[str], true_y: np.ndarray | None = None) -> str:
    if true_y is None:
        return csv_text(("t", "decoded_y"), [(t + 1, y_labels[s]) for t, s in enumerate(decoded)])
    return csv_text(("t", "true_y", "decoded_y"),
                    [(t + 1, y_labels[a], y_labels[s]) for t, (a, s) in enumerate(zip(true_y, decoded))])
