"""JSON persistence for models, classifiers, datasets, and trained ensembles.

Configuration models use the bare schema ``{"M": ..., "entries": [...]}``;
every other object carries a ``"kind"`` discriminator. Floats are written
with Python's shortest round-trip representation, so save/load is
lossless. Schema violations raise :class:`SchemaError` naming the field.
"""

import json
import os

import numpy as np

from .errors import InvalidInputError, SchemaError
from .risk import ConfigurationModel
from .toys import LabeledDataset, LinearClassifier, SmallMlp
from .train import RoundRecord, TrainedRec


def _require(mapping, key, path):
    if not isinstance(mapping, dict):
        raise SchemaError(f"{path}: expected an object")
    if key not in mapping:
        raise SchemaError(f"{path}.{key}: missing")
    return mapping[key]


def model_to_dict(model):
    return model.to_dict()


def model_from_dict(doc, path="$"):
    m = _require(doc, "M", path)
    if not isinstance(m, int) or m < 1:
        raise SchemaError(f"{path}.M: must be a positive integer")
    raw_entries = _require(doc, "entries", path)
    if not isinstance(raw_entries, list) or not raw_entries:
        raise SchemaError(f"{path}.entries: must be a nonempty list")
    entries = []
    for k, entry in enumerate(raw_entries):
        weight = _require(entry, "weight", f"{path}.entries[{k}]")
        if not isinstance(weight, (int, float)) or weight < 0:
            raise SchemaError(f"{path}.entries[{k}].weight: must be a number >= 0")
        profiles = _require(entry, "profiles", f"{path}.entries[{k}]")
        if not isinstance(profiles, list):
            raise SchemaError(f"{path}.entries[{k}].profiles: must be a list")
        for r, row in enumerate(profiles):
            if (
                not isinstance(row, list)
                or len(row) != m
                or any(bit not in (0, 1) for bit in row)
            ):
                raise SchemaError(
                    f"{path}.entries[{k}].profiles[{r}]: must be a 0/1 list of length {m}"
                )
        entries.append((float(weight), np.asarray(profiles, dtype=np.uint8).reshape(-1, m)))
    try:
        return ConfigurationModel(m, entries)
    except InvalidInputError as exc:
        raise SchemaError(f"{path}.entries: {exc}") from exc


def classifier_to_dict(model):
    if isinstance(model, LinearClassifier):
        return {
            "kind": "linear_classifier",
            "weights": model.weights.tolist(),
            "bias": model.bias.tolist(),
        }
    if isinstance(model, SmallMlp):
        return {
            "kind": "mlp_classifier",
            "w1": model.w1.tolist(),
            "b1": model.b1.tolist(),
            "w2": model.w2.tolist(),
            "b2": model.b2.tolist(),
        }
    raise SchemaError(f"$.kind: cannot serialize {type(model).__name__}")


def classifier_from_dict(doc, path="$"):
    kind = _require(doc, "kind", path)
    try:
        if kind == "linear_classifier":
            return LinearClassifier(
                np.asarray(_require(doc, "weights", path), dtype=np.float64),
                np.asarray(_require(doc, "bias", path), dtype=np.float64),
            )
        if kind == "mlp_classifier":
            return SmallMlp(
                np.asarray(_require(doc, "w1", path), dtype=np.float64),
                np.asarray(_require(doc, "b1", path), dtype=np.float64),
                np.asarray(_require(doc, "w2", path), dtype=np.float64),
                np.asarray(_require(doc, "b2", path), dtype=np.float64),
            )
    except InvalidInputError as exc:
        raise SchemaError(f"{path}: {exc}") from exc
    raise SchemaError(f"{path}.kind: unknown classifier kind {kind!r}")


def ensemble_to_dict(members):
    return {"kind": "ensemble", "members": [classifier_to_dict(m) for m in members]}


def ensemble_from_dict(doc, path="$"):
    members = _require(doc, "members", path)
    if not isinstance(members, list) or not members:
        raise SchemaError(f"{path}.members: must be a nonempty list")
    return [
        classifier_from_dict(member, f"{path}.members[{i}]")
        for i, member in enumerate(members)
    ]


def dataset_to_dict(dataset):
    return {
        "kind": "dataset",
        "x": dataset.x.tolist(),
        "y": dataset.y.tolist(),
        "weights": dataset.weights.tolist(),
    }


def dataset_from_dict(doc, path="$"):
    try:
        return LabeledDataset(
            np.asarray(_require(doc, "x", path), dtype=np.float64),
            np.asarray(_require(doc, "y", path), dtype=np.int64),
            None
            if doc.get("weights") is None
            else np.asarray(doc["weights"], dtype=np.float64),
        )
    except (InvalidInputError, ValueError) as exc:
        raise SchemaError(f"{path}: {exc}") from exc


def save_json(obj_dict, path):
    with open(path, "w") as fh:
        json.dump(obj_dict, fh, indent=1)
        fh.write("\n")


def load_json(path):
    with open(path) as fh:
        return json.load(fh)


def save_model(model, path):
    save_json(model_to_dict(model), path)


def save_trained_rec(trained, out_dir):
    """Persist a trained ensemble as a directory of JSON files plus history CSV."""
    os.makedirs(out_dir, exist_ok=True)
    for i, member in enumerate(trained.classifiers):
        save_json(classifier_to_dict(member), os.path.join(out_dir, f"member_{i:02d}.json"))
    save_json(
        {
            "kind": "sampling_probability",
            "alpha": trained.alpha.tolist(),
            "members": len(trained.classifiers),
        },
        os.path.join(out_dir, "alpha.json"),
    )
    with open(os.path.join(out_dir, "history.csv"), "w") as fh:
        fh.write("round,rec_risk,member_risks,alpha,warm_start_ok,best_epoch,zero_weight_epochs\n")
        for rec in trained.history:
            member_risks = "|".join(f"{v:.17g}" for v in rec.member_risks)
            alpha = "|".join(f"{v:.17g}" for v in rec.alpha)
            zero = "|".join(str(e) for e in rec.zero_weight_epochs)
            fh.write(
                f"{rec.round_index},{rec.rec_risk:.17g},{member_risks},{alpha},"
                f"{int(rec.warm_start_ok)},{rec.best_epoch},{zero}\n"
            )


def load_trained_rec(rec_dir):
    alpha_doc = load_json(os.path.join(rec_dir, "alpha.json"))
    n_members = _require(alpha_doc, "members", "$")
    members = []
    for i in range(n_members):
        members.append(
            classifier_from_dict(
                load_json(os.path.join(rec_dir, f"member_{i:02d}.json"))
            )
        )
    alpha = np.asarray(_require(alpha_doc, "alpha", "$"), dtype=np.float64)
    history = []
    history_path = os.path.join(rec_dir, "history.csv")
    if os.path.exists(history_path):
        with open(history_path) as fh:
            next(fh)
            for line in fh:
                parts = line.rstrip("\n").split(",")
                history.append(
                    RoundRecord(
                        round_index=int(parts[0]),
                        rec_risk=float(parts[1]),
                        member_risks=np.array(
                            [float(v) for v in parts[2].split("|") if v]
                        ),
                        alpha=np.array([float(v) for v in parts[3].split("|") if v]),
                        warm_start_ok=bool(int(parts[4])),
                        best_epoch=int(parts[5]),
                        zero_weight_epochs=[int(v) for v in parts[6].split("|") if v],
                    )
                )
    return TrainedRec(classifiers=members, alpha=alpha, history=history)


def load_model(path):
    """Load any supported JSON object, dispatching on its shape.

    Directories are trained ensembles; documents with ``M``/``entries``
    are configuration models; everything else dispatches on ``kind``.
    """
    if os.path.isdir(path):
        return load_trained_rec(path)
    doc = load_json(path)
    if not isinstance(doc, dict):
        raise SchemaError("$: expected a JSON object")
    if "M" in doc and "entries" in doc:
        return model_from_dict(doc)
    kind = doc.get("kind")
    if kind in ("linear_classifier", "mlp_classifier"):
        return classifier_from_dict(doc)
    if kind == "ensemble":
        return ensemble_from_dict(doc)
    if kind == "dataset":
        return dataset_from_dict(doc)
    raise SchemaError(f"$.kind: cannot dispatch on {kind!r}")
