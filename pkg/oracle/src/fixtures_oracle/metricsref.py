"""Reference row-wise micro F1 and the fixed-weight summary metrics."""

NOCALL = "nocall"


def row_f1(pred: set[str], truth: set[str]) -> float:
    if not pred or not truth:
        raise ValueError("label sets must be non-empty")
    return 2.0 * len(pred & truth) / (len(pred) + len(truth))


def case_metrics(rows: list[tuple[set[str], set[str]]]) -> dict[str, float]:
    """Five metrics for one batch of (pred, truth) rows.

    Call rows are those whose truth contains at least one bird; nocall rows
    have truth == {"nocall"}. An empty split contributes 0.0.
    """
    scores = [row_f1(p, t) for p, t in rows]
    call = [s for s, (_, t) in zip(scores, rows) if t - {NOCALL}]
    nocall = [s for s, (_, t) in zip(scores, rows) if t == {NOCALL}]
    f1_overall = sum(scores) / len(scores) if scores else 0.0
    f1_call = sum(call) / len(call) if call else 0.0
    f1_nocall = sum(nocall) / len(nocall) if nocall else 0.0
    return {
        "f1_overall": f1_overall,
        "f1_call": f1_call,
        "f1_nocall": f1_nocall,
        "hnvs": 0.63 * f1_nocall + 0.37 * f1_call,
        "lnvs": 0.54 * f1_nocall + 0.46 * f1_call,
    }
