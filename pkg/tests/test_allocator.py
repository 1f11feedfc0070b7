import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import exact_cut, oracle_decide

from arasim.allocator import (
    BRANCHES,
    AllocationContext,
    ClusterUnavailable,
    RetryPolicy,
    accumulate_requests,
    allocate_adaptive,
    allocate_baseline,
    evaluate,
    scale_cut,
)
from arasim.cluster import ResourceQuantity as RQ
from arasim.knowledge import KnowledgeBase, TaskStateRecord
from arasim.workflow import TaskSpec

IDLE = {f"node-0{i}": RQ(8000, 16384) for i in range(1, 7)}


def ctx(task, request, total, re_max, alpha=0.8, beta=20, min_cpu=1, min_mem=1):
    return AllocationContext(RQ(*task), RQ(*request), RQ(*total), RQ(*re_max), alpha, beta, min_cpu, min_mem)


def test_scale_cut_examples():
    assert scale_cut(RQ(2000, 4000), RQ(6000, 60000), RQ(12000, 20000)) == RQ(1000, 12000)
    assert scale_cut(RQ(2000, 4000), RQ(2000, 4000), RQ(2000, 4000)) == RQ(2000, 4000)
    with pytest.raises(ZeroDivisionError):
        scale_cut(RQ(1, 1), RQ(1, 1), RQ(0, 1))


@settings(max_examples=500)
@given(st.integers(1, 10**6), st.integers(1, 10**6), st.integers(0, 10**7), st.integers(0, 10**7), st.integers(0, 10**6), st.integers(0, 10**6))
def test_scale_cut_matches_rationals(tc, tm, gc, gm, rc, rm):
    task, total, request = (tc, tm), (gc, gm), (tc + rc, tm + rm)
    assert scale_cut(RQ(*task), RQ(*total), RQ(*request)).as_tuple() == exact_cut(task, total, request)


def test_evaluate_examples():
    d = evaluate(ctx((2000, 4000), (10000, 20000), (30000, 60000), (6000, 12000)))
    assert (d.allocated, d.case_taken) == (RQ(2000, 4000), "1:B1&B2")
    d = evaluate(ctx((9000, 4000), (10000, 20000), (30000, 60000), (8000, 16000)))
    assert (d.allocated, d.case_taken) == (RQ(6400, 4000), "1:!B1&B2")
    d = evaluate(ctx((2000, 4000), (12000, 12000), (6000, 6000), (8000, 16000)))
    assert d.allocated == RQ(1000, 2000)
    assert d.case_taken.startswith("4:")


def test_context_validation():
    with pytest.raises(ValueError):
        ctx((1, 1), (1, 1), (1, 1), (1, 1), alpha=1.0)
    with pytest.raises(ValueError):
        ctx((1, 1), (1, 1), (1, 1), (1, 1), beta=10)
    with pytest.raises(ValueError):
        ctx((5, 5), (1, 1), (1, 1), (1, 1))


contexts = st.tuples(
    st.integers(1, 8000), st.integers(1, 16000),  # task
    st.integers(0, 40000), st.integers(0, 80000),  # extra lookahead demand
    st.integers(0, 48000), st.integers(0, 98304),  # total residual
    st.integers(1, 8000), st.integers(1, 16384),  # re_max
    st.sampled_from([0.5, 0.8, 0.9, 0.33]),
    st.integers(20, 200),
)


def _unpack(c):
    tc, tm, ec, em, gc, gm, xc, xm, alpha, beta = c
    return (tc, tm), (tc + ec, tm + em), (gc, gm), (xc, xm), alpha, beta


@settings(max_examples=500)
@given(contexts)
def test_evaluate_matches_table_oracle(c):
    task, request, total, re_max, alpha, beta = _unpack(c)
    d = evaluate(ctx(task, request, total, re_max, alpha, beta, 500, 1000))
    cpu, mem, case, first, second, viable = oracle_decide(task, request, total, re_max, alpha, beta, 500, 1000)
    assert d.allocated.as_tuple() == (cpu, mem)
    assert d.viable == viable
    assert d.case_taken in BRANCHES
    assert int(d.case_taken[0]) == case


def test_every_branch_reachable():
    seen = set()
    rng = random.Random(5)
    for _ in range(20000):
        task = (rng.randint(1, 8000), rng.randint(1, 16000))
        request = (task[0] + rng.randint(0, 20000), task[1] + rng.randint(0, 40000))
        total = (rng.randint(0, 30000), rng.randint(0, 60000))
        re_max = (rng.randint(1, 8000), rng.randint(1, 16000))
        seen.add(evaluate(ctx(task, request, total, re_max)).case_taken)
    assert seen == set(BRANCHES)


@settings(max_examples=300)
@given(contexts)
def test_scaled_components_never_exceed_re_max_or_request(c):
    task, request, total, re_max, alpha, beta = _unpack(c)
    d = evaluate(ctx(task, request, total, re_max, alpha, beta))
    if not d.case_taken.startswith("4:"):
        # outside the both-short case, a component either is the request or is capped below Re_max
        for got, want, cap in ((d.allocated.cpu, task[0], re_max[0]), (d.allocated.mem, task[1], re_max[1])):
            assert got == want or got <= cap
    assert d.allocated.cpu <= max(task[0], re_max[0])
    assert d.allocated.mem <= max(task[1], re_max[1])


@settings(max_examples=300)
@given(contexts)
def test_more_residual_never_shrinks_cut(c):
    task, request, total, re_max, alpha, beta = _unpack(c)
    small = scale_cut(RQ(*task), RQ(*total), RQ(*request))
    big = scale_cut(RQ(*task), RQ(total[0] + 1000, total[1] + 1000), RQ(*request))
    assert small.fits_in(big)


@settings(max_examples=300)
@given(contexts)
def test_viability_definition(c):
    task, request, total, re_max, alpha, beta = _unpack(c)
    d = evaluate(ctx(task, request, total, re_max, alpha, beta, 500, 1000))
    assert d.viable == (d.allocated.cpu >= 500 and d.allocated.mem >= 1000 + beta)


def test_strict_comparison_at_equality():
    # request equal to total is not "plentiful", so the cut branch applies
    d = evaluate(ctx((2000, 4000), (6000, 12000), (6000, 12000), (8000, 16000)))
    assert d.case_taken.startswith("4:")
    # task equal to Re_max is not "below" it, so alpha scaling applies
    d = evaluate(ctx((8000, 4000), (8000, 4000), (30000, 60000), (8000, 16000)))
    assert d.case_taken == "1:!B1&B2"
    assert d.allocated == RQ(6400, 4000)


def _task(cpu=2000, mem=4000):
    return TaskSpec("t", "stress", cpu, mem, 10, 500, 1000)


def test_accumulate_examples():
    kb = KnowledgeBase()
    assert accumulate_requests(_task(), (0, 10), kb) == RQ(2000, 4000)
    kb.put_record(TaskStateRecord("w", "edge", 10, 10, 20, 2000, 4000))
    assert accumulate_requests(_task(), (0, 10), kb) == RQ(2000, 4000)
    for i in range(3):
        kb.put_record(TaskStateRecord("w", f"o{i}", i, 10, i + 10, 2000, 4000))
    assert accumulate_requests(_task(), (0, 10), kb) == RQ(8000, 16000)
    kb.put_record(TaskStateRecord("w", "self", 0, 10, 10, 2000, 4000))
    assert accumulate_requests(_task(), (0, 10), kb, exclude=("w", "self")) == RQ(8000, 16000)


def test_adaptive_idle_cluster_entry_task():
    t = TaskSpec("t00", "entry", 2000, 4000, 12, 1000, 1000)
    d, c = allocate_adaptive(t, (0, 12), IDLE, KnowledgeBase())
    assert d.viable and d.allocated == RQ(2000, 4000)
    assert c.total_residual == RQ(48000, 98304)


def test_adaptive_contended_is_not_viable():
    kb = KnowledgeBase()
    for i in range(40):
        kb.put_record(TaskStateRecord("w", f"o{i:02d}", 0, 10, 10, 2000, 4000))
    residual = {"n1": RQ(3000, 3000)}
    d, _ = allocate_adaptive(_task(), (0, 10), residual, kb)
    assert not d.viable
    assert d.allocated.mem < 1000 + 20


def test_adaptive_without_capacity():
    with pytest.raises(ClusterUnavailable):
        allocate_adaptive(_task(), (0, 10), {}, KnowledgeBase())
    with pytest.raises(ClusterUnavailable):
        allocate_adaptive(_task(), (0, 10), {"n1": RQ(0, 5000)}, KnowledgeBase())


def test_retry_policy():
    policy = RetryPolicy(3)
    d = evaluate(ctx((2000, 4000), (12000, 12000), (6000, 6000), (8000, 16000), min_cpu=5000))
    assert not policy.proceed(d, 2)
    assert policy.proceed(d, 3)


def test_baseline_examples():
    assert allocate_baseline(_task(), IDLE).allocated == RQ(2000, 4000)
    assert allocate_baseline(_task(), {"a": RQ(1000, 1000), "b": RQ(1000, 1000)}) is None


@settings(max_examples=200)
@given(st.dictionaries(st.sampled_from("abcdef"), st.builds(RQ, st.integers(0, 8000), st.integers(0, 16384)), min_size=1))
def test_baseline_never_scales(residual):
    d = allocate_baseline(_task(), residual)
    if d is None:
        assert not any(RQ(2000, 4000).fits_in(r) for r in residual.values())
    else:
        assert d.allocated == RQ(2000, 4000)


@settings(max_examples=200)
@given(st.integers(1, 8000), st.integers(0, 8000), st.integers(1, 16000), st.sampled_from([0.5, 0.8, 0.9, 0.33]))
def test_alpha_branch_value(re_cpu, over, mem, alpha):
    # plenty of residual cluster-wide, but the task is at least as large as the best node
    task = (re_cpu + over, mem)
    d = evaluate(ctx(task, task, (10**6, 10**6), (re_cpu, 10**5), alpha))
    assert d.case_taken == "1:!B1&B2"
    assert alpha * re_cpu - 1 < d.allocated.cpu <= alpha * re_cpu + 1e-9
