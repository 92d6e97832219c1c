"""Built-in verification: gradient checks, masking statistics, metric oracles.

Each check is small enough to run in seconds; the command exits nonzero if
any row fails. The oracle implementations here are deliberately naive
(loops, enumeration) and independent of the library code paths they verify.
"""

from __future__ import annotations

import itertools
import math
from dataclasses import fields as dc_fields

import numpy as np

from ..lexicon import AugmentedVocab, Lexicon, Term, find_occurrences
from ..masking import (
    MaskingPolicy,
    SpanKind,
    SpanRecord,
    Stage,
    mask_example,
    round_half_up,
    sample_span_length,
    truncated_geometric_pmf,
)
from ..metrics import RankedList, accuracy, f1_scores, mrr, mse_r2, ndcg, precision_at_k
from ..objectives import (
    SboParams,
    ce_loss,
    disc_loss,
    gelu,
    grad_check,
    init_sbo_params,
    mlm_loss,
    pack_arrays,
    sbo_loss,
    scl_loss,
    unpack_arrays,
)
from ..rng import substream
from ..tokenizer import SpecialTokens

GRAD_TOL = 1e-4
GRAD_STEP = 1e-5


def _check_grad_mlm(rng) -> tuple[bool, str]:
    logits = rng.normal(size=(4, 7))
    labels = rng.integers(0, 7, size=4)

    def f(x):
        loss, g = mlm_loss(x.reshape(4, 7), labels)
        return loss, g.ravel()

    err = grad_check(f, logits.ravel(), step=GRAD_STEP)
    return err < GRAD_TOL, f"rel err {err:.2e}"


def _check_grad_disc(rng) -> tuple[bool, str]:
    probs = rng.uniform(0.1, 0.9, size=9)
    flags = rng.integers(0, 2, size=9).astype(bool)

    def f(x):
        return disc_loss(x, flags)

    err = grad_check(f, probs, step=GRAD_STEP)
    return err < GRAD_TOL, f"rel err {err:.2e}"


def _check_grad_ce(rng) -> tuple[bool, str]:
    probs = rng.dirichlet(np.ones(4), size=5)
    labels = rng.integers(0, 4, size=5)

    def f(x):
        loss, g = ce_loss(x.reshape(5, 4), labels, validate=False)
        return loss, g.ravel()

    err = grad_check(f, probs.ravel(), step=GRAD_STEP)
    return err < GRAD_TOL, f"rel err {err:.2e}"


def _check_grad_scl(rng) -> tuple[bool, str]:
    feats = rng.normal(size=(6, 5))
    labels = np.array([0, 0, 1, 1, 2, 2])

    def f(x):
        loss, g = scl_loss(x.reshape(6, 5), labels, 0.7)
        return loss, g.ravel()

    err = grad_check(f, feats.ravel(), step=GRAD_STEP)
    return err < GRAD_TOL, f"rel err {err:.2e}"


def _check_grad_sbo(rng) -> tuple[bool, str]:
    d, h, pd, max_span, V, L = 4, 6, 3, 10, 11, 9
    params = init_sbo_params(d, h, pd, max_span, rng)
    arrays = {f.name: getattr(params, f.name) for f in dc_fields(params)}
    arrays["states"] = rng.normal(size=(L, d))
    arrays["emb"] = rng.normal(size=(V, d)) * 0.5
    spans = [
        SpanRecord(start=2, end=4, kind=SpanKind.GEOMETRIC_SPAN, target_ids=(3, 7)),
        SpanRecord(start=6, end=7, kind=SpanKind.FINANCIAL_PHRASE, target_ids=(10,), orig_length=2, term_id=0),
    ]
    flat, manifest = pack_arrays(arrays)

    def f(x):
        arrs = unpack_arrays(x, manifest)
        p = SboParams(**{k: v for k, v in arrs.items() if k not in ("states", "emb")})
        loss, grads = sbo_loss(spans, arrs["states"], p, arrs["emb"])
        gall = dict(grads.params)
        gall["states"] = grads.d_states
        gall["emb"] = grads.d_embedding
        gflat, _ = pack_arrays(gall)
        return loss, gflat

    err = grad_check(f, flat, step=GRAD_STEP)
    return err < GRAD_TOL, f"rel err {err:.2e}"


def _check_gelu(rng) -> tuple[bool, str]:
    # Derivative of the exact-erf form against a central difference.
    xs = rng.uniform(-4, 4, size=200)
    from ..objectives import gelu_grad

    num = (gelu(xs + 1e-6) - gelu(xs - 1e-6)) / 2e-6
    err = float(np.max(np.abs(num - gelu_grad(xs))))
    return err < 1e-6, f"max |d gelu| err {err:.2e}"


def _toy_world() -> tuple[Lexicon, AugmentedVocab, SpecialTokens]:
    # ids 0-4 special, 5-29 plain, 30-33 financial words, (40,41)/(42,43,44) phrases
    terms = [
        Term(term_id=0, surface="fin30", token_ids=(30,)),
        Term(term_id=1, surface="fin31", token_ids=(31,)),
        Term(term_id=2, surface="fin32", token_ids=(32,)),
        Term(term_id=3, surface="fin33", token_ids=(33,)),
        Term(term_id=4, surface="p40 p41", token_ids=(40, 41)),
        Term(term_id=5, surface="p42 p43 p44", token_ids=(42, 43, 44)),
    ]
    lex = Lexicon(terms, source_digest="selftest")
    av = AugmentedVocab(base_size=45, phrase_id_of={4: 45, 5: 46})
    special = SpecialTokens(mask_id=4, unk_id=1, special_ids=frozenset({0, 1, 2, 3, 4}))
    return lex, av, special


def _check_mask_budget(rng) -> tuple[bool, str]:
    lex, av, special = _toy_world()
    policy = MaskingPolicy(seed=3)
    for trial in range(50):
        n = int(rng.integers(20, 120))
        body = rng.integers(5, 40, size=n - 2).tolist()
        tokens = [2] + body + [3]
        ex = mask_example(tokens, lex, av, policy, substream(3, "mask", trial), special)
        masked = sum(s.length for s in ex.spans if s.kind != SpanKind.FINANCIAL_PHRASE)
        want = round_half_up(policy.total_rate * len(tokens))
        if masked != want:
            return False, f"budget {masked} != {want} at n={n}"
    return True, "exact budget on 50 random sequences"


def _check_mask_determinism(rng) -> tuple[bool, str]:
    lex, av, special = _toy_world()
    policy = MaskingPolicy(seed=9, stage=Stage.WORD_AND_PHRASE, use_spans=True)
    tokens = [2] + rng.integers(5, 45, size=80).tolist() + [3]
    a = mask_example(tokens, lex, av, policy, substream(9, "mask", 0), special)
    b = mask_example(tokens, lex, av, policy, substream(9, "mask", 0), special)
    return a == b, "bit-identical re-mask"


def _check_stage_monotonic(rng) -> tuple[bool, str]:
    lex, av, special = _toy_world()
    policy = MaskingPolicy(seed=1, stage=Stage.WORD_ONLY)
    for trial in range(30):
        tokens = [2, 40, 41, 10, 42, 43, 44, 11, 3]
        ex = mask_example(tokens, lex, av, policy, substream(1, "mask", trial), special)
        if any(s.kind == SpanKind.FINANCIAL_PHRASE for s in ex.spans):
            return False, "phrase collapse in WORD_ONLY stage"
    return True, "no collapses across 30 word-only examples"


def _check_geometric_mean(rng) -> tuple[bool, str]:
    policy = MaskingPolicy()
    pmf = truncated_geometric_pmf(policy.geo_p, policy.max_span)
    want = float(np.arange(1, policy.max_span + 1) @ pmf)
    draws = 200_000
    stream = substream(17, "selftest-geo")
    got = float(np.mean([sample_span_length(policy, stream) for _ in range(draws)]))
    # 3 sigma of the sample mean
    var = float((np.arange(1, 11) ** 2) @ pmf) - want**2
    tol = 3.0 * math.sqrt(var / draws)
    return abs(got - want) < tol, f"mean {got:.4f} vs {want:.4f} (tol {tol:.4f})"


def _check_phrase_match(rng) -> tuple[bool, str]:
    lex, av, special = _toy_world()
    terms = list(lex.terms)
    for trial in range(200):
        n = int(rng.integers(3, 60))
        tokens = rng.integers(5, 46, size=n).tolist()
        got = find_occurrences(tokens, lex)
        # naive scan: at each position try every term, longest wins
        expect = []
        pos = 0
        while pos < n:
            best = None
            for t in terms:
                L = len(t.token_ids)
                if pos + L <= n and tuple(tokens[pos : pos + L]) == t.token_ids:
                    if best is None or L > len(best.token_ids):
                        best = t
            if best is None:
                pos += 1
            else:
                expect.append((pos, pos + len(best.token_ids), best.term_id))
                pos += len(best.token_ids)
        if [(o.start, o.end, o.term_id) for o in got] != expect:
            return False, f"mismatch on trial {trial}"
    return True, "matches naive matcher on 200 sequences"


def _check_metric_oracles(rng) -> tuple[bool, str]:
    for trial in range(100):
        n = int(rng.integers(2, 8))
        grades = {f"d{i}": float(rng.integers(0, 4)) for i in range(n)}
        ranking = [f"d{i}" for i in rng.permutation(n)]
        rl = RankedList(query_id="q", ranking=tuple(ranking), relevance=grades)
        k = int(rng.integers(1, n + 1))
        got = ndcg(rl, k)
        # enumerate every permutation to find the ideal DCG
        def dcg_of(perm):
            return sum(
                (2.0 ** grades[d] - 1.0) / math.log2(r + 2) for r, d in enumerate(perm[:k])
            )
        ideal = max(dcg_of(p) for p in itertools.permutations(ranking))
        want = dcg_of(ranking) / ideal if ideal > 0 else 0.0
        if abs(got - want) > 1e-12:
            return False, f"ndcg {got} != {want}"
        # MRR / precision against direct definitions
        first = next((r + 1 for r, d in enumerate(ranking) if grades[d] > 0), None)
        want_mrr = 0.0 if first is None else 1.0 / first
        if abs(mrr([rl]) - want_mrr) > 1e-12:
            return False, "mrr mismatch"
        want_p = sum(1 for d in ranking[:k] if grades[d] > 0) / k
        if abs(precision_at_k(rl, k) - want_p) > 1e-12:
            return False, "precision mismatch"
    for trial in range(100):
        n = int(rng.integers(2, 12))
        preds = rng.integers(0, 3, size=n).tolist()
        labels = rng.integers(0, 3, size=n).tolist()
        acc = accuracy(preds, labels)
        if abs(acc - sum(p == y for p, y in zip(preds, labels)) / n) > 1e-12:
            return False, "accuracy mismatch"
        f1 = f1_scores(preds, labels, classes=[0, 1, 2])
        for c in (0, 1, 2):
            tp = sum(1 for p, y in zip(preds, labels) if p == c and y == c)
            pred_c = preds.count(c)
            true_c = labels.count(c)
            prec = tp / pred_c if pred_c else 0.0
            rec = tp / true_c if true_c else 0.0
            want = 2 * prec * rec / (prec + rec) if prec + rec else 0.0
            if abs(f1["per_class"][c] - want) > 1e-12:
                return False, "f1 mismatch"
        y = rng.normal(size=n)
        yhat = y + rng.normal(size=n) * 0.3
        mse, r2 = mse_r2(yhat.tolist(), y.tolist())
        want_mse = float(np.mean((yhat - y) ** 2))
        want_r2 = 1.0 - float(np.sum((yhat - y) ** 2) / np.sum((y - y.mean()) ** 2))
        if abs(mse - want_mse) > 1e-12 or abs(r2 - want_r2) > 1e-10:
            return False, "mse/r2 mismatch"
    return True, "100 randomized instances per metric"


def run_selftest(inject_fault: bool = False) -> tuple[list[tuple[str, bool, str]], bool]:
    rng = np.random.default_rng(20240817)
    checks = [
        ("grad L_MLM", _check_grad_mlm),
        ("grad L_Disc", _check_grad_disc),
        ("grad L_CE", _check_grad_ce),
        ("grad L_SCL", _check_grad_scl),
        ("grad L_SBO (incl f internals)", _check_grad_sbo),
        ("gelu derivative", _check_gelu),
        ("masking budget exactness", _check_mask_budget),
        ("masking determinism", _check_mask_determinism),
        ("stage monotonicity", _check_stage_monotonic),
        ("geometric span sampler mean", _check_geometric_mean),
        ("phrase matching vs naive scan", _check_phrase_match),
        ("metric oracles", _check_metric_oracles),
    ]
    rows = []
    all_ok = True
    for name, fn in checks:
        try:
            ok, detail = fn(rng)
        except Exception as exc:  # a crashed check is a failed check
            ok, detail = False, f"raised {type(exc).__name__}: {exc}"
        rows.append((name, ok, detail))
        all_ok = all_ok and ok
    if inject_fault:
        rows.append(("injected fault", False, "forced failure for testing"))
        all_ok = False
    return rows, all_ok


def print_report(rows: list[tuple[str, bool, str]]) -> None:
    width = max(len(name) for name, _, _ in rows)
    for name, ok, detail in rows:
        status = "PASS" if ok else "FAIL"
        print(f"{status}  {name:<{width}}  {detail}")
