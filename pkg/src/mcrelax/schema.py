"""JSON schemas for run configurations and reports."""
from __future__ import annotations

_NUM = {"type": "number"}
_POS = {"type": "number", "exclusiveMinimum": 0}
_U64 = {"type": "integer", "minimum": 0, "maximum": 2**64 - 1}
_NULLABLE_NUM = {"type": ["number", "null"]}


def _obj(props: dict, required: tuple = ()) -> dict:
    return {"type": "object", "properties": props, "required": list(required),
            "additionalProperties": False}


CONFIG_SCHEMA = _obj({
    "regularizer": _obj({
        "variant": {"enum": ["potts", "metric", "aniso-metric"]},
        "weight": _POS,
        "metric": {"type": "array", "minItems": 2,
                   "items": {"type": "array", "items": _NUM}},
    }, required=("variant",)),
    "solver": _obj({
        "tau": _POS,
        "sigma": _POS,
        "theta": {"type": "number", "minimum": 0, "maximum": 1},
        "max_iters": {"type": "integer", "minimum": 1},
        "gap_tol": _POS,
        "check_every": {"type": "integer", "minimum": 1},
        "dloc_max_sweeps": {"type": "integer", "minimum": 1},
        "dloc_tol": _POS,
    }),
    "rounding": _obj({
        "seed": _U64,
        "stream": _U64,
        "n_samples": {"type": "integer", "minimum": 1},
        "k_max": {"type": "integer", "minimum": 1},
    }),
    "io": _obj({name: {"type": "string"} for name in ("problem", "solution", "dual", "out")}),
    "coarea": _obj({"n_alpha": {"type": "array", "minItems": 1,
                                "items": {"type": "integer", "minimum": 1}}}),
    "data": _obj({"shift_to_nonnegative": {"type": "boolean"}}),
})

_ENERGIES = _obj({
    "primal": _NUM, "data_part": _NUM, "reg_part": _NUM, "dual": _NUM, "gap": _NUM,
    "rel_gap": _NUM, "psi_converged": {"type": "boolean"}, "psi_residual": _NUM,
}, required=("primal", "data_part", "reg_part", "dual", "gap", "rel_gap"))

_ROUNDING = _obj({
    "n_samples": {"type": "integer", "minimum": 1},
    "n_failed": {"type": "integer", "minimum": 0},
    "mean_f": _NUM, "std_f": _NULLABLE_NUM, "ci95_halfwidth": _NULLABLE_NUM,
    "mean_data": _NUM, "std_data": _NULLABLE_NUM, "mean_reg": _NUM, "std_reg": _NULLABLE_NUM,
    "mean_k_final": _NUM, "min_f": _NUM, "best_index": {"type": "integer", "minimum": 0},
    "seed": _U64, "stream": _U64,
    "marginals": {"type": "array"},
}, required=("n_samples", "mean_f", "mean_data", "mean_reg", "min_f", "best_index"))

_CERTIFICATE = _obj({
    "a_priori_factor": {"type": "number", "minimum": 2},
    "f_relaxed": _NUM, "f_rounded": _NUM, "f_dual": _NULLABLE_NUM,
    "eps_posteriori": _NULLABLE_NUM,
    "bound_check": _obj({"mean_f": _NUM, "ci95": _NUM, "rhs": _NUM,
                         "satisfied": {"type": "boolean"}},
                        required=("mean_f", "ci95", "rhs", "satisfied")),
    "degenerate": {"type": "boolean"},
    "data_shifted": {"type": "boolean"},
    "dual_violation": _NUM,
}, required=("a_priori_factor", "f_relaxed", "f_rounded", "bound_check"))

_COAREA_ROW = _obj({"n_alpha": {"type": "integer", "minimum": 1}, "lhs": _NUM, "rhs": _NUM,
                    "rel_dev": _NUM}, required=("n_alpha", "lhs", "rhs", "rel_dev"))

REPORT_SCHEMA = _obj({
    "command": {"enum": ["solve", "round", "certify", "coarea"]},
    "shape": _obj({"width": {"type": "integer"}, "height": {"type": "integer"},
                   "labels": {"type": "integer"}}, required=("width", "height", "labels")),
    "regularizer": {"type": "object"},
    "energies": _ENERGIES,
    "solver": _obj({"iterations": {"type": "integer"}, "converged": {"type": "boolean"},
                    "log": {"type": "array",
                            "items": {"type": "array", "minItems": 4, "maxItems": 4}}}),
    "rounding": _ROUNDING,
    "certificate": _CERTIFICATE,
    "coarea": {"type": "array", "items": _COAREA_ROW},
    "provenance": _obj({
        "config_sha256": {"type": "string", "pattern": "^[0-9a-f]{64}$"},
        "inputs": {"type": "object", "additionalProperties": {"type": "string"}},
        "versions": {"type": "object", "additionalProperties": {"type": "string"}},
        "timestamp": {"type": "string"},
    }, required=("config_sha256", "versions", "timestamp")),
}, required=("command", "shape", "provenance"))
