from __future__ import annotations

import random

import pytest

from kernelcur import curation as C
from kernelcur.records import CuratedSample

from conftest import build_groups, make_record


def one_group(spec_entry):
    return build_groups({"t": spec_entry})[0]


def test_part_a_shortest_and_fastest():
    group = one_group(("multi_op", [(3000, "correct", 2.1), (5000, "correct", 1.0), (7000, "incorrect", 0)]))
    sample = C.select_part_a(group)
    assert sample is not None
    assert sample.gen_index == 0
    assert sample.part == C.PART_A
    assert sample.speedup == 2.1


def test_part_a_shortest_incorrect_emits_nothing():
    group = one_group(("multi_op", [(5000, "correct", 1.5), (1000, "incorrect", 0)]))
    assert C.select_part_a(group) is None


def test_part_a_all_incorrect_emits_nothing():
    group = one_group(("multi_op", [(i * 100 + 100, "incorrect", 0) for i in range(5)]))
    assert C.select_part_a(group) is None


def test_part_a_tie_on_speedup_still_emits():
    group = one_group(("multi_op", [(100, "correct", 1.5), (900, "correct", 1.5)]))
    sample = C.select_part_a(group)
    assert sample is not None and sample.gen_index == 0


def test_part_a_shortest_beaten_on_speedup():
    group = one_group(("multi_op", [(100, "correct", 1.0), (900, "correct", 1.5)]))
    assert C.select_part_a(group) is None


def test_part_b_strict_threshold():
    groups = build_groups(
        {"t": ("multi_op", [(10, "correct", 6.2), (20, "correct", 5.0), (30, "correct", 4.9)])}
    )
    picked = C.select_part_b(groups, 5.0, already=set())
    assert [(s.task_id, s.gen_index) for s in picked] == [("t", 0)]
    assert picked[0].part == C.PART_B


def test_part_b_excludes_part_a_keys():
    groups = build_groups({"t": ("multi_op", [(10, "correct", 7.0), (20, "correct", 1.0)])})
    # gen 0 is shortest and fastest, so the combined rule claims it first
    assert C.select_part_a(groups[0]).gen_index == 0
    assert C.select_part_b(groups, 5.0) == []  # recomputes part A internally
    assert len(C.select_part_b(groups, 5.0, already=set())) == 1


def test_part_b_multiple_per_task():
    groups = build_groups({"t": ("multi_op", [(10, "correct", 8.0), (200, "correct", 9.0), (300, "incorrect", 0)])})
    # shortest gen (10 tokens) has 8.0 but gen 1 has 9.0, so part A stays empty
    picked = C.select_part_b(groups, 5.0)
    assert {(s.task_id, s.gen_index) for s in picked} == {("t", 0), ("t", 1)}


def test_part_b_invariant_to_group_order():
    spec = {
        f"t{i}": ("multi_op", [(10 * i + 10, "correct", 5.5 + i), (5, "incorrect", 0)]) for i in range(5)
    }
    groups = build_groups(spec)
    forward = C.select_part_b(groups, 5.0, already=set())
    backward = C.select_part_b(list(reversed(groups)), 5.0, already=set())
    assert forward == backward


def test_part_c_sort_and_truncate():
    spec = {
        "s1": ("single_op", [(100, "correct", 1.4)]),
        "s2": ("single_op", [(100, "correct", 0.9)]),
        "s3": ("single_op", [(100, "correct", 2.0)]),
    }
    groups = build_groups(spec)
    picked = C.select_part_c(groups, set(), 2)
    assert [s.speedup for s in picked] == [2.0, 1.4]
    assert all(s.part == C.PART_C for s in picked)
    assert len(C.select_part_c(groups, set(), 0)) == 3


def test_part_c_skips_represented_tasks_and_non_single_op():
    spec = {
        "s1": ("single_op", [(100, "correct", 1.4)]),
        "m1": ("multi_op", [(100, "correct", 3.0)]),
        "u1": ("unknown", [(100, "correct", 3.0)]),
    }
    groups = build_groups(spec)
    picked = C.select_part_c(groups, {("s1", 0)}, 0)
    assert picked == []
    assert C.count_unknown_type_tasks(groups) == 1


def test_part_c_best_pick_tie_breaks():
    spec = {
        "s1": ("single_op", [(900, "correct", 2.0), (100, "correct", 2.0), (100, "correct", 1.0)])
    }
    picked = C.select_part_c(build_groups(spec), set(), 0)
    # same speedup: shorter reasoning wins, then lower gen_index
    assert picked[0].gen_index == 1


def test_curate_concur_five_task_fixture(five_task_groups):
    cfg = C.CurationConfig()
    samples = C.curate(five_task_groups, cfg)
    assert len(samples) == 4
    tallies = C.part_tallies(samples)
    assert tallies == {C.PART_A: 2, C.PART_B: 1, C.PART_C: 1}
    keys = [s.key for s in samples]
    assert len(set(keys)) == 4
    by_part = {s.key: s.part for s in samples}
    assert by_part[("t1", 0)] == C.PART_A
    assert by_part[("t2", 0)] == C.PART_A
    assert by_part[("t3", 0)] == C.PART_B
    assert by_part[("t4", 0)] == C.PART_C
    header = C.curation_header(cfg, samples, five_task_groups)
    assert header["n_unknown_type_tasks"] == 1
    assert header["n_samples"] == 4


def test_curate_output_sorted(five_task_groups):
    samples = C.curate(five_task_groups, C.CurationConfig())
    sort_keys = [(s.part or "", s.task_id, s.gen_index) for s in samples]
    assert sort_keys == sorted(sort_keys)


def test_min_len_policy():
    spec = {
        "a": ("multi_op", [(900, "correct", 1.0), (5000, "correct", 2.0)]),
        "b": ("multi_op", [(1100, "correct", 1.0)]),
        "c": ("multi_op", [(1300, "correct", 1.0)]),
        "d": ("multi_op", [(10, "incorrect", 0)]),  # skipped: no correct generation
    }
    groups = build_groups(spec)
    cfg = C.CurationConfig(policy="min_len", target_size=2)
    samples = C.curate(groups, cfg)
    assert [(s.task_id, s.reasoning_tokens) for s in samples] == [("a", 900), ("b", 1100)]
    assert all(s.part is None and s.policy == "min_len" for s in samples)


def test_max_len_policy_extremal_per_task():
    rng = random.Random(2)
    spec = {}
    for i in range(12):
        gens = []
        for j in range(4):
            status = "correct" if rng.random() < 0.6 else "incorrect"
            gens.append((rng.randrange(100, 9000), status, round(rng.uniform(0.1, 3.0), 3) if status == "correct" else 0))
        spec[f"t{i:02d}"] = ("multi_op", gens)
    groups = build_groups(spec)
    by_task = {g.task_id: g for g in groups}
    samples = C.curate(groups, C.CurationConfig(policy="max_len", target_size=6))
    assert len(samples) <= 6
    for s in samples:
        correct_tokens = [
            rec.reasoning_tokens
            for rec, ev in by_task[s.task_id].items
            if ev is not None and ev.status == "correct"
        ]
        assert s.reasoning_tokens == max(correct_tokens)


def test_speedup_first_policy():
    spec = {
        "a": ("multi_op", [(100, "correct", 1.5), (200, "correct", 3.0)]),
        "b": ("multi_op", [(100, "correct", 2.0)]),
        "c": ("multi_op", [(100, "correct", 0.5)]),
    }
    samples = C.curate(build_groups(spec), C.CurationConfig(policy="speedup_first", target_size=2))
    assert [(s.task_id, s.speedup) for s in samples] == [("a", 3.0), ("b", 2.0)]


def test_random_policy_seed_deterministic():
    rng = random.Random(9)
    spec = {}
    for i in range(30):
        gens = []
        for j in range(5):
            status = "correct" if rng.random() < 0.5 else "incorrect"
            gens.append((rng.randrange(100, 5000), status, 1.5 if status == "correct" else 0))
        spec[f"t{i:02d}"] = ("multi_op", gens)
    groups = build_groups(spec)
    cfg = C.CurationConfig(policy="random", seed=42, target_size=10)
    first = C.curate(groups, cfg)
    second = C.curate(groups, cfg)
    assert first == second
    different = C.curate(groups, C.CurationConfig(policy="random", seed=43, target_size=10))
    assert [s.key for s in different] != [s.key for s in first] or different == first


def test_target_clamped_with_warning(caplog):
    spec = {"a": ("multi_op", [(100, "correct", 1.0)])}
    with caplog.at_level("WARNING"):
        samples = C.curate(build_groups(spec), C.CurationConfig(policy="min_len", target_size=50))
    assert len(samples) == 1
    assert "clamping" in caplog.text


def test_curated_samples_always_correct_and_positive():
    rng = random.Random(17)
    spec = {}
    for i in range(40):
        gens = []
        for j in range(5):
            status = rng.choice(["correct", "incorrect", "compile_error"])
            gens.append(
                (rng.randrange(0, 8000) or 1, status, round(rng.uniform(0.2, 7.0), 2) if status == "correct" else 0)
            )
        spec[f"t{i:02d}"] = (rng.choice(["single_op", "multi_op", "unknown"]), gens)
    groups = build_groups(spec)
    eval_by_key = {ev.key: ev for g in groups for _, ev in g.items if ev is not None}
    for policy in C.POLICIES:
        samples = C.curate(groups, C.CurationConfig(policy=policy, target_size=15))
        keys = [s.key for s in samples]
        assert len(keys) == len(set(keys))
        for s in samples:
            assert eval_by_key[s.key].status == "correct"
            assert s.speedup > 0


def test_config_validation():
    with pytest.raises(ValueError):
        C.CurationConfig(speedup_threshold=0)
    with pytest.raises(ValueError):
        C.CurationConfig(policy="nope")
    with pytest.raises(ValueError):
        C.CurationConfig(target_size=0)


def test_infer_task_type_heuristic():
    single = "import torch\n\ndef forward(a, b):\n    return torch.matmul(a, b)\n"
    fused = "import torch.nn.functional as F\n\ndef forward(x, w):\n    return F.relu(torch.conv2d(x, w))\n"
    assert C.infer_task_type(single) == "single_op"
    assert C.infer_task_type(fused) == "multi_op"
    assert C.infer_task_type("just a comment") == "unknown"
    # tensor factories are not operator calls
    assert C.infer_task_type("x = torch.randn(4)\ny = torch.relu(x)") == "single_op"


def test_infer_single_op_enables_part_c():
    # shortest gen incorrect, speedup under the threshold: only rule (c) can fire
    spec = {"u1": ("unknown", [(2000, "correct", 1.3), (1500, "incorrect", 0)])}
    groups = build_groups(spec)
    for g in groups:
        for rec, _ in g.items:
            rec.task_source = "import torch\nout = torch.matmul(a, b)\n"

    assert C.curate(groups, C.CurationConfig()) == []
    inferred = C.curate(groups, C.CurationConfig(infer_single_op=True))
    assert [(s.key, s.part) for s in inferred] == [(("u1", 0), C.PART_C)]


# --- SFT export ---------------------------------------------------------------


def lookup_for(samples_spec):
    records = [make_record(t, i, tokens=tok) for (t, i, tok) in samples_spec]
    return C.record_lookup(records), records


def test_export_sft_basic():
    lookup, records = lookup_for([("t1", 0, 40)])
    sample = CuratedSample("t1", 0, C.PART_A, "concur", 2.0, 40)
    examples = C.export_sft([sample], lookup, C.default_template())
    assert len(examples) == 1
    ex = examples[0]
    assert records[0].task_source in ex["prompt"]
    assert ex["response"].endswith(records[0].kernel_source)
    assert ex["response"].startswith(C.THINK_OPEN)
    assert C.THINK_CLOSE in ex["response"]
    assert ex["loss_on"] == "response"


def test_export_sft_empty_trace_omits_delimiters():
    rec = make_record("t1", 0, tokens=0)
    assert rec.reasoning_trace == ""
    sample = CuratedSample("t1", 0, None, "min_len", 1.5, 0)
    examples = C.export_sft([sample], {rec.key: rec}, C.default_template())
    assert examples[0]["response"] == rec.kernel_source
    assert C.THINK_OPEN not in examples[0]["response"]


def test_export_sft_missing_record():
    sample = CuratedSample("ghost", 0, None, "concur", 1.0, 10)
    with pytest.raises(KeyError, match="ghost"):
        C.export_sft([sample], {}, C.default_template())


def test_template_missing_placeholder_named():
    bad = C.PromptTemplate("optimize this:\n$ref_arch_torch\n$ref_arch_kernel\n")
    with pytest.raises(ValueError, match=r"\$code"):
        bad.validate()


def test_template_duplicate_and_unknown_placeholders():
    with pytest.raises(ValueError, match="repeats"):
        C.PromptTemplate("$code $code $ref_arch_torch $ref_arch_kernel").validate()
    with pytest.raises(ValueError, match=r"\$extra"):
        C.PromptTemplate("$code $ref_arch_torch $ref_arch_kernel $extra").validate()


def test_default_template_valid_and_renders():
    template = C.default_template()
    template.validate()
    text = template.render(ref_arch_torch="REF_T", ref_arch_kernel="REF_K", code="THE_CODE")
    assert "REF_T" in text and "REF_K" in text and "THE_CODE" in text
    assert "ModelNew" in text
