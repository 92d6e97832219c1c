from __future__ import annotations

import json
import math

import numpy as np
import pytest

from finmlm.errors import ContractViolation, DivergenceError
from finmlm.masking import MaskingPolicy, SpanKind, SpanRecord
from finmlm.objectives import LossWeights, pack_arrays, sbo_loss, unpack_arrays
from finmlm.rng import substream
from finmlm.tinymodel import (
    EncoderConfig,
    encoder_backward,
    encoder_forward,
    finetune_classifier,
    init_encoder_params,
    init_train_state,
    load_checkpoint,
    perplexity,
    pretrain,
    sample_replacements,
    save_checkpoint,
)
from finmlm.toydata import toy_classification, toy_corpus

RNG = np.random.default_rng(11)


@pytest.fixture(scope="module")
def small_setup(toy_world):
    tok, lex, av = toy_world["tok"], toy_world["lex"], toy_world["vocab"]
    corpus = toy_corpus(24, 20, seed=5)
    val = toy_corpus(8, 20, seed=6)
    cfg = EncoderConfig(
        vocab_size=av.total_size, d_model=16, n_heads=2, n_layers=1, ffn_dim=24, max_len=32
    )
    return {
        "tok": tok,
        "lex": lex,
        "vocab": av,
        "special": toy_world["special"],
        "cfg": cfg,
        "corpus": [tok.encode(d) for d in corpus],
        "val": [tok.encode(d) for d in val],
    }


def test_encoder_config_validation():
    with pytest.raises(Exception):
        EncoderConfig(vocab_size=10, d_model=10, n_heads=3)
    with pytest.raises(Exception):
        EncoderConfig(vocab_size=10, dropout=0.5)


def test_encoder_backward_matches_fd():
    cfg = EncoderConfig(vocab_size=13, d_model=8, n_heads=2, n_layers=2, ffn_dim=12, max_len=16)
    params = init_encoder_params(cfg, np.random.default_rng(0))
    ids = np.random.default_rng(1).integers(0, 13, size=7)
    W = np.random.default_rng(2).normal(size=(7, 8))
    flat, manifest = pack_arrays(params)

    def f(x):
        p = unpack_arrays(x, manifest)
        states, cache = encoder_forward(p, ids, cfg)
        grads = encoder_backward(p, cache, W, cfg)
        gflat, _ = pack_arrays(grads)
        return float((W * states).sum()), gflat

    _, analytic = f(flat)
    step = 1e-4
    numeric = np.zeros_like(flat)
    for i in range(flat.size):
        x = flat.copy()
        x[i] += step
        up, _ = f(x)
        x[i] -= 2 * step
        dn, _ = f(x)
        numeric[i] = (up - dn) / (2 * step)
    # floor the denominator at 1e-4 of gradient scale: coordinates with
    # ~1e-9 gradients are pure FD roundoff at double precision
    scale = max(np.abs(analytic).max(), 1.0)
    err = np.abs(analytic - numeric) / np.maximum(
        np.maximum(np.abs(analytic), np.abs(numeric)), 1e-4 * scale
    )
    assert err.max() < 1e-4


def test_pretrain_bit_identical(small_setup):
    s = small_setup
    policy = MaskingPolicy(seed=0, use_spans=True)
    weights = LossWeights(lambda1=1.0, lambda2=50.0)
    runs = []
    for _ in range(2):
        res = pretrain(
            s["corpus"][:8], s["val"][:4], s["lex"], s["vocab"], s["special"],
            policy, s["cfg"], weights, epochs=2, word_only_epochs=1, seed=3,
        )
        runs.append(res)
    a = runs[0].state.named_arrays()
    b = runs[1].state.named_arrays()
    assert a.keys() == b.keys()
    for k in a:
        assert np.array_equal(a[k], b[k]), k
    assert runs[0].epoch_ppl == runs[1].epoch_ppl


def test_pretrain_zero_epochs_returns_init(small_setup):
    s = small_setup
    policy = MaskingPolicy(seed=0)
    weights = LossWeights()
    res = pretrain(
        s["corpus"][:4], s["val"][:4], s["lex"], s["vocab"], s["special"],
        policy, s["cfg"], weights, epochs=0, seed=9,
    )
    init = init_train_state(s["cfg"], weights, policy, seed=9)
    for k, v in res.state.named_arrays().items():
        assert np.array_equal(v, init.named_arrays()[k])
    baseline = perplexity(
        s["val"][:4], init, s["lex"], s["vocab"], s["special"], policy, seed=9
    ).token_level
    assert res.baseline_ppl == pytest.approx(baseline)
    assert res.epoch_ppl == []


def test_lambda_zero_never_touches_discriminator(small_setup):
    s = small_setup
    policy = MaskingPolicy(seed=0)
    weights = LossWeights(lambda1=0.0, lambda2=0.0)
    res = pretrain(
        s["corpus"][:8], s["val"][:4], s["lex"], s["vocab"], s["special"],
        policy, s["cfg"], weights, epochs=1, word_only_epochs=1, seed=4,
    )
    init = init_train_state(s["cfg"], weights, policy, seed=4)
    for k in init.disc:
        assert np.array_equal(res.state.disc[k], init.disc[k]), f"disc.{k} moved"
    for k in ("w1", "w2"):
        assert np.array_equal(getattr(res.state.sbo, k), getattr(init.sbo, k))
    assert not np.array_equal(res.state.gen["tok_emb"], init.gen["tok_emb"])
    for rep in res.epoch_loss:
        assert rep.l_sbo == 0.0 and rep.l_disc == 0.0


def test_loss_decomposition_every_epoch(small_setup):
    s = small_setup
    weights = LossWeights(lambda1=1.0, lambda2=50.0)
    policy = MaskingPolicy(seed=1, use_spans=True)
    res = pretrain(
        s["corpus"][:8], s["val"][:4], s["lex"], s["vocab"], s["special"],
        policy, s["cfg"], weights, epochs=2, word_only_epochs=1, seed=5,
    )
    for rep in res.epoch_loss:
        assert rep.total == pytest.approx(
            rep.l_mlm + weights.lambda1 * rep.l_sbo + weights.lambda2 * rep.l_disc, rel=1e-12
        )


class TestSampleReplacements:
    def test_peaked_on_original_counts_as_not_replaced(self):
        input_ids = [2, 7, 3]
        logits = np.full((1, 10), -1e9)
        logits[0, 7] = 0.0
        corrupted, flags = sample_replacements(input_ids, logits, [1], [7], substream(0, "s"))
        assert corrupted.tolist() == input_ids
        assert not flags.any()

    def test_uniform_replacement_probability(self):
        V = 10
        input_ids = [0]
        hits = 0
        trials = 4000
        for t in range(trials):
            _, flags = sample_replacements(
                input_ids, np.zeros((1, V)), [0], [0], substream(1, "s", t)
            )
            hits += int(flags[0])
        observed = hits / trials
        sigma = math.sqrt(0.9 * 0.1 / trials)
        assert abs(observed - 0.9) < 4 * sigma

    def test_no_positions_is_identity(self):
        input_ids = [5, 6, 7]
        corrupted, flags = sample_replacements(
            input_ids, np.zeros((0, 4)), [], [], substream(2, "s")
        )
        assert corrupted.tolist() == input_ids
        assert not flags.any()


class TestPerplexity:
    def test_uniform_generator_gives_vocab_size(self, small_setup):
        s = small_setup
        policy = MaskingPolicy(seed=0)
        state = init_train_state(s["cfg"], LossWeights(), policy, seed=0)
        state.gen["out_emb"][:] = 0.0
        state.gen["out_bias"][:] = 0.0
        rep = perplexity(s["val"], state, s["lex"], s["vocab"], s["special"], policy, seed=2)
        assert rep.token_level == pytest.approx(s["cfg"].vocab_size, rel=1e-9)
        assert rep.sentence_level == pytest.approx(s["cfg"].vocab_size, rel=1e-9)

    def test_oracle_generator_approaches_one(self, small_setup):
        s = small_setup
        policy = MaskingPolicy(seed=0)
        state = init_train_state(s["cfg"], LossWeights(), policy, seed=0)
        # all-identical corpus: every masked label is the same token
        tok = s["tok"]
        target = tok.ids["w01"]
        corpus = [[tok.cls_id] + [target] * 18 + [tok.sep_id] for _ in range(4)]
        state.gen["out_emb"][:] = 0.0
        state.gen["out_bias"][:] = 0.0
        state.gen["out_bias"][target] = 1e3
        rep = perplexity(corpus, state, s["lex"], s["vocab"], s["special"], policy, seed=2)
        assert rep.token_level == pytest.approx(1.0, abs=1e-9)

    def test_zero_masked_tokens_is_error(self, small_setup):
        s = small_setup
        policy = MaskingPolicy(seed=0)
        state = init_train_state(s["cfg"], LossWeights(), policy, seed=0)
        tok = s["tok"]
        tiny = [[tok.cls_id, tok.ids["w00"], tok.sep_id]]
        with pytest.raises(ContractViolation):
            perplexity(tiny, state, s["lex"], s["vocab"], s["special"], policy, seed=2)

    def test_dump_recomputation_oracle(self, small_setup, tmp_path):
        s = small_setup
        policy = MaskingPolicy(seed=0)
        state = init_train_state(s["cfg"], LossWeights(), policy, seed=7)
        dump = tmp_path / "logits.jsonl"
        rep = perplexity(
            s["val"], state, s["lex"], s["vocab"], s["special"], policy, seed=3, dump_path=dump
        )
        total_nll = 0.0
        count = 0
        for line in dump.read_text().splitlines():
            obj = json.loads(line)
            for lab, row in zip(obj["labels"], obj["log_probs"]):
                total_nll += -row[lab]
                count += 1
                # each dumped row is a normalized distribution
                assert math.exp(max(row)) <= 1.0 + 1e-9
                assert sum(math.exp(v) for v in row) == pytest.approx(1.0, abs=1e-9)
        assert count == rep.masked_tokens
        assert math.exp(total_nll / count) == pytest.approx(rep.token_level, rel=1e-12)


def test_untied_sbo_projection_trains_separately(small_setup):
    s = small_setup
    import dataclasses

    cfg = dataclasses.replace(s["cfg"], sbo_tied_projection=False)
    policy = MaskingPolicy(seed=0, use_spans=True)
    weights = LossWeights(lambda1=1.0, lambda2=0.0)
    res = pretrain(
        s["corpus"][:8], s["val"][:2], s["lex"], s["vocab"], s["special"],
        policy, cfg, weights, epochs=1, word_only_epochs=0, seed=2,
    )
    init = init_train_state(cfg, weights, policy, seed=2)
    assert "sbo_out_emb" in res.state.gen
    assert not np.array_equal(res.state.gen["sbo_out_emb"], init.gen["sbo_out_emb"])
    # the generator projection still trains through the MLM head alone
    assert not np.array_equal(res.state.gen["out_emb"], init.gen["out_emb"])


def test_sbo_gradients_reach_boundary_states():
    from finmlm.objectives import init_sbo_params

    rng = np.random.default_rng(3)
    params = init_sbo_params(6, 8, 4, 10, rng)
    states = rng.normal(size=(10, 6))
    emb = rng.normal(size=(15, 6))
    span = SpanRecord(start=4, end=6, kind=SpanKind.GEOMETRIC_SPAN, target_ids=(1, 2))
    _, grads = sbo_loss([span], states, params, emb)
    assert np.abs(grads.d_states[3]).max() > 0
    assert np.abs(grads.d_states[6]).max() > 0
    untouched = [i for i in range(10) if i not in (3, 6)]
    assert not grads.d_states[untouched].any()


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_divergence_aborts_with_last_finite_state(small_setup):
    s = small_setup
    policy = MaskingPolicy(seed=0)
    weights = LossWeights(lambda1=0.0, lambda2=0.0)
    with pytest.raises(DivergenceError) as err:
        pretrain(
            s["corpus"][:8], s["val"][:2], s["lex"], s["vocab"], s["special"],
            policy, s["cfg"], weights, epochs=2, word_only_epochs=2, seed=6, lr=1e12,
        )
    state = getattr(err.value, "state", None)
    assert state is not None
    for arr in state.named_arrays().values():
        assert np.isfinite(arr).all()


def test_checkpoint_round_trip_and_determinism(small_setup, tmp_path):
    s = small_setup
    policy = MaskingPolicy(seed=0)
    weights = LossWeights(lambda1=1.0, lambda2=50.0)
    res = pretrain(
        s["corpus"][:6], s["val"][:2], s["lex"], s["vocab"], s["special"],
        policy, s["cfg"], weights, epochs=1, word_only_epochs=0, seed=8,
    )
    p1 = tmp_path / "a.ckpt"
    p2 = tmp_path / "b.ckpt"
    save_checkpoint(p1, res.state)
    save_checkpoint(p2, res.state)
    assert p1.read_bytes() == p2.read_bytes()
    loaded = load_checkpoint(p1)
    for k, v in res.state.named_arrays().items():
        assert np.array_equal(loaded.named_arrays()[k], v), k
    assert loaded.opt.t == res.state.opt.t
    for k in res.state.opt.m:
        assert np.array_equal(loaded.opt.m[k], res.state.opt.m[k])
    assert loaded.policy_digest == res.state.policy_digest
    # resuming from a loaded checkpoint reproduces the original perplexity
    ppl_orig = perplexity(s["val"][:2], res.state, s["lex"], s["vocab"], s["special"], policy, seed=1)
    ppl_load = perplexity(s["val"][:2], loaded, s["lex"], s["vocab"], s["special"], policy, seed=1)
    assert ppl_orig.token_level == ppl_load.token_level


class TestFinetune:
    def _encoded(self, tok, rows, max_len=32):
        return [(tok.encode(text)[:max_len], lab) for text, lab in rows]

    def test_linearly_separable_reaches_full_accuracy(self, small_setup):
        s = small_setup
        state = init_train_state(s["cfg"], LossWeights(), MaskingPolicy(seed=0), seed=1)
        data = self._encoded(s["tok"], toy_classification(10, seed=3))
        report = finetune_classifier(
            data, state, LossWeights(lambda_cls=1.0), epochs=20, num_classes=2, seed=0
        )
        assert report["accuracy"] == 1.0

    def test_scl_mix_also_reported(self, small_setup):
        s = small_setup
        state = init_train_state(s["cfg"], LossWeights(), MaskingPolicy(seed=0), seed=1)
        data = self._encoded(s["tok"], toy_classification(6, seed=4))
        r09 = finetune_classifier(
            data, state, LossWeights(lambda_cls=0.9), epochs=5, num_classes=2, seed=0
        )
        assert set(r09) >= {"accuracy", "per_class_f1", "macro_f1", "epoch_loss"}
        assert len(r09["epoch_loss"]) == 5

    def test_frozen_random_head_is_chance_level(self, small_setup):
        s = small_setup
        rng = np.random.default_rng(5)
        state = init_train_state(s["cfg"], LossWeights(), MaskingPolicy(seed=0), seed=2)
        tok = s["tok"]
        texts = [
            " ".join(f"w{int(rng.integers(0, 40)):02d}" for _ in range(12)) for _ in range(90)
        ]
        labels = [i % 3 for i in range(90)]
        data = self._encoded(tok, list(zip(texts, labels)))
        report = finetune_classifier(
            data, state, LossWeights(lambda_cls=1.0), epochs=0, num_classes=3, seed=0
        )
        sigma = math.sqrt((1 / 3) * (2 / 3) / 90)
        assert abs(report["accuracy"] - 1 / 3) < 3 * sigma
