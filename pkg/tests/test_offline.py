import math
import subprocess
import sys
import textwrap

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from kfood.errors import (GuardRailExceeded, InvalidParameter, ParseError, ResidualTooLarge,
                          UnknownVariable)
from kfood.flownet import EdgeKind, build_network
from kfood.instance import Instance, Request, gen_partition_instance, gen_tiny
from kfood.metric import build_metric_space
from kfood.offline import (Limits, Objective, Solution, Status, brute_force_oracle,
                           build_flow_milp, extract_rewards, max_residual, residuals,
                           size_bounds, solve_embedded)
from kfood.offline.lpformat import (export_milp_text, parse_external_solution,
                                    write_solution_text)
from kfood.offline.model import default_penalty
from kfood.online.simulate import Policy, simulate

ABC = build_metric_space(3, [(0, 1, 2), (1, 2, 3)])


def forced_route(k=1):
    # servers at A, one request B -> C with window [0, 5]
    return Instance(ABC, (Request(0, 1, 2, 0, 5),), k, (0,) * k, horizon=8)


def edge_index(net):
    return {(int(net.tail[e]), int(net.head[e])): e for e in range(net.n_edges)}


def path_edges(net, hops):
    """Edge ids along node sequence ``hops``."""
    idx = edge_index(net)
    return [idx[(a, b)] for a, b in zip(hops, hops[1:])]


def idle_path(net, loc):
    return [net.SOURCE] + [net.grid_id(loc, s) for s in range(net.steps)] + [net.SINK]


# -- model structure ----------------------------------------------------------


def test_toy_variable_count():
    ms = build_metric_space(2, [(0, 1, 1)])
    inst = Instance(ms, (Request(0, 0, 1, 1, 3),), 1, (0,), horizon=4)
    net = build_network(inst)
    # 2 source + 2 sink + 2*4 self + 2 approach + 1 delivery
    assert net.n_edges == 15
    model = build_flow_milp(net)
    assert model.n_vars == 15 + 1 + 1 + 1
    assert len(model.reward_vars) == 1 and model.minreward_var is not None


def test_mincost_structure():
    net = build_network(forced_route(k=2))
    model = build_flow_milp(net, objective="mincost")
    assert model.reward_vars == {} and model.minreward_var is None
    assert model.n_vars == net.n_edges + 1
    assert np.array_equal(model.c[:net.n_edges], net.cost.astype(float))
    assert model.c[model.infeas_vars[0]] == model.penalty
    assert (model.ub[:net.n_edges] == 2).all()


def test_two_sided_adds_one_row():
    net = build_network(gen_tiny(4))
    base = build_flow_milp(net)
    two = build_flow_milp(net, alpha=1.2)
    assert two.n_rows == base.n_rows + 1
    assert two.row_names[-1] == "two_sided"
    literal = build_flow_milp(net, alpha=1.2, literal_two_sided=True)
    assert literal.n_rows == base.n_rows + net.instance.n


def test_invalid_parameters():
    net = build_network(forced_route())
    with pytest.raises(InvalidParameter):
        build_flow_milp(net, penalty=0)
    with pytest.raises(InvalidParameter):
        build_flow_milp(net, alpha=-1)
    with pytest.raises(InvalidParameter):
        build_flow_milp(net, alpha=1.2, objective="mincost")
    with pytest.raises(InvalidParameter):
        build_flow_milp(net, k=2, initial_mode="fixed")


def test_default_penalty_exceeds_any_reward():
    inst = gen_tiny(11)
    net = build_network(inst)
    p = default_penalty(net)
    diameter = int(inst.metric.dist.max())
    most = sum(diameter + inst.metric.d(r.source, r.dest) for r in inst.requests)
    assert p > most


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 100_000))
def test_size_within_bounds(seed):
    inst = gen_tiny(seed)
    net = build_network(inst)
    model = build_flow_milp(net)
    nv, nr = size_bounds(net, inst.k)
    assert model.n_vars <= nv and model.n_rows <= nr


# -- embedded solver -----------------------------------------------------------


def test_forced_route():
    net = build_network(forced_route())
    mc = solve_embedded(build_flow_milp(net, objective="mincost", initial_mode="fixed"))
    assert mc.status is Status.OPTIMAL and mc.objective_value == pytest.approx(5)
    mm = solve_embedded(build_flow_milp(net, initial_mode="fixed"))
    assert mm.min_reward == pytest.approx(5)
    rep = extract_rewards(mm, net)
    assert rep.rewards == pytest.approx([5]) and rep.unserved == []


def test_servable_requests_all_z_zero():
    inst = gen_partition_instance([2, 3, 4], 2)
    sol = solve_embedded(build_flow_milp(build_network(inst), initial_mode="fixed"))
    assert sol.status is Status.OPTIMAL
    assert set(sol.z.values()) == {0}


def test_unservable_request_penalised():
    # window of length 0 and no server at the source
    ms = build_metric_space(2, [(0, 1, 4)])
    inst = Instance(ms, (Request(0, 1, 0, 2, 2),), 1, (0,), horizon=8)
    sol = solve_embedded(build_flow_milp(build_network(inst), initial_mode="fixed"))
    assert sol.z == {0: 1}
    assert sol.objective_value == pytest.approx(-sol.model.penalty)


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 100_000))
def test_tiny_dominates_oracle(seed):
    inst = gen_tiny(seed)
    net = build_network(inst)
    orc = brute_force_oracle(inst)
    model = build_flow_milp(net, initial_mode="fixed")
    sol = solve_embedded(model)
    assert sol.objective_value >= orc.maxmin_objective(model.penalty) - 1e-6
    assert max_residual(sol) <= 1e-6
    mc = solve_embedded(build_flow_milp(net, objective="mincost", initial_mode="fixed"))
    assert mc.objective_value <= orc.mincost_objective(mc.model.penalty) + 1e-6
    assert max_residual(mc) <= 1e-6


def test_alpha_infinite_matches_large():
    net = build_network(gen_tiny(7))
    a = solve_embedded(build_flow_milp(net, alpha=math.inf))
    b = solve_embedded(build_flow_milp(net, alpha=1e6))
    c = solve_embedded(build_flow_milp(net))
    assert a.objective_value == pytest.approx(b.objective_value, abs=1e-6)
    assert a.objective_value == pytest.approx(c.objective_value, abs=1e-6)


def test_guard_rail():
    net = build_network(forced_route())
    model = build_flow_milp(net)
    from kfood.offline import solver
    old = solver.MAX_VARS
    solver.MAX_VARS = 3
    try:
        with pytest.raises(GuardRailExceeded):
            solve_embedded(model)
        assert solve_embedded(model, force=True).status is Status.OPTIMAL
    finally:
        solver.MAX_VARS = old


def test_limits_and_determinism():
    net = build_network(gen_tiny(21))
    model = build_flow_milp(net, initial_mode="fixed")
    a = solve_embedded(model)
    assert a == solve_embedded(model)
    limited = solve_embedded(model, Limits(max_nodes=1))
    assert limited.status in (Status.OPTIMAL, Status.LIMIT_REACHED)
    with pytest.raises(ValueError):
        solve_embedded(model, Limits(max_nodes=0))


# -- rewards and residuals ------------------------------------------------------


def test_all_unserved_rewards():
    net = build_network(forced_route(k=2))
    model = build_flow_milp(net)
    x = np.zeros(model.n_vars)
    for i in range(2):
        for e in path_edges(net, idle_path(net, 0)):
            x[model.flow_var(e, i)] = 1.0
    x[model.infeas_vars[0]] = 1.0
    rep = extract_rewards(Solution(Status.OPTIMAL, 0.0, x, model), net)
    assert rep.rewards == [0.0, 0.0] and rep.unserved == [0] and rep.min_reward == 0.0


def split_solution():
    """Two servers at A each send half a unit through the request, half idles."""
    net = build_network(forced_route(k=2))
    model = build_flow_milp(net)
    pid = net.pickup_of[0]
    # approach leaves A at 5 - 2 = 3, delivery reaches C at 5 + 3 = 8
    served = ([net.SOURCE] + [net.grid_id(0, s) for s in range(4)] + [pid]
              + [net.grid_id(2, 8), net.SINK])
    x = np.zeros(model.n_vars)
    for i in range(2):
        for e in path_edges(net, served):
            x[model.flow_var(e, i)] += 0.5
        for e in path_edges(net, idle_path(net, 0)):
            x[model.flow_var(e, i)] += 0.5
        x[model.reward_vars[i]] = 2.5
    x[model.minreward_var] = 2.5
    return net, model, x


def test_fractional_split_halves_costs():
    net, model, x = split_solution()
    sol = Solution(Status.OPTIMAL, 2.5, x, model)
    rep = extract_rewards(sol, net)
    # half of approach 2 plus half of delivery 3
    assert rep.rewards == [2.5, 2.5]
    assert rep.served == [0]
    assert max_residual(sol) == 0.0


def test_verifier_flags_each_family():
    net, model, x = split_solution()
    y = x.copy()
    y[model.reward_vars[0]] = 3.0
    assert residuals(Solution(Status.OPTIMAL, 0, y, model))["reward"] == pytest.approx(0.5)
    y = x.copy()
    e = path_edges(net, idle_path(net, 0))[3]
    y[model.flow_var(e, 0)] += 0.1
    got = residuals(Solution(Status.OPTIMAL, 0, y, model))
    assert got["conservation"] == pytest.approx(0.1)
    y = x.copy()
    y[model.infeas_vars[0]] = 1.0
    got = residuals(Solution(Status.OPTIMAL, 0, y, model))
    assert got["serve"] == pytest.approx(1.0)


# -- text formats ---------------------------------------------------------------


def lp_rows(text):
    """Constraint rows of an LP document as ``name -> (variables, comparator, rhs)``."""
    body = text.split("Subject To\n")[1].split("Bounds\n")[0]
    rows, current = {}, None
    for line in body.splitlines():
        if line.startswith(" ") and not line.startswith("  "):
            current, _, rest = line.strip().partition(":")
            rows[current] = rest
        else:
            rows[current] += " " + line.strip()
    out = {}
    for name, expr in rows.items():
        toks = expr.split()
        out[name] = ({t for t in toks if t[0].isalpha()}, toks[-2], float(toks[-1]))
    return out


def test_lp_export_structure():
    model = build_flow_milp(build_network(gen_tiny(5)))
    text = export_milp_text(model)
    assert "Maximize" in text.splitlines()[:2]
    for section in ("Subject To", "Bounds", "Binary", "End"):
        assert section in text
    assert text == export_milp_text(model)
    rows = lp_rows(text)
    assert len(rows) == model.n_rows
    for rid in model.infeas_vars:
        holders = [nm for nm, (vs, op, rhs) in rows.items() if f"z_r{rid}" in vs]
        assert len(holders) == 1
        assert rows[holders[0]][1:] == ("=", 1.0)


def test_lp_export_two_sided_row():
    model = build_flow_milp(build_network(gen_tiny(5)), alpha=1.2)
    rows = lp_rows(export_milp_text(model))
    mixed = [nm for nm, (vs, _, _) in rows.items()
             if any(v.startswith("m_s") for v in vs) and any(v.startswith("f_e") for v in vs)
             and not nm.startswith("reward_")]
    assert mixed == ["two_sided"]


def test_solution_round_trip():
    model = build_flow_milp(build_network(gen_tiny(9)), initial_mode="fixed")
    sol = solve_embedded(model)
    back = parse_external_solution(model, write_solution_text(sol))
    assert back == sol


def test_parse_unknown_variable():
    model = build_flow_milp(build_network(forced_route()))
    with pytest.raises(UnknownVariable):
        parse_external_solution(model, "nope 1\n")
    with pytest.raises(ParseError):
        parse_external_solution(model, "z_r0\n")


def test_parse_rejects_conservation_violation():
    net, model, x = split_solution()
    sol = Solution(Status.OPTIMAL, 2.5, x, model)
    text = write_solution_text(sol)
    assert parse_external_solution(model, text) == Solution(Status.OPTIMAL, 2.5, x, model)
    # late idle edge, carrying only the idle half
    e = path_edges(net, idle_path(net, 0))[-3]
    name = model.names[model.flow_var(e, 0)]
    bent = text.replace(f"\n{name} 0.5\n", f"\n{name} 0.6\n")
    assert bent != text
    with pytest.raises(ResidualTooLarge):
        parse_external_solution(model, bent)


HIGHS_SCRIPT = textwrap.dedent("""
    import sys
    import highspy
    h = highspy.Highs()
    h.setOptionValue("output_flag", False)
    h.readModel(sys.argv[1])
    h.run()
    sol = h.getSolution().col_value
    lp = h.getLp()
    out = sys.argv[1] + ".sol"
    with open(out, "w") as fh:
        fh.write("# status Optimal\\n")
        for name, v in zip(lp.col_names_, sol):
            fh.write(f"{name} {v!r}\\n")
    print(out)
""")


def test_external_highs_round_trip(tmp_path):
    pytest.importorskip("highspy")
    script = tmp_path / "highs_solve.py"
    script.write_text(HIGHS_SCRIPT)
    inst = gen_tiny(13)
    model = build_flow_milp(build_network(inst), initial_mode="fixed")
    lp = tmp_path / "model.lp"
    lp.write_text(export_milp_text(model))
    out = subprocess.run([sys.executable, str(script), str(lp)], capture_output=True, text=True,
                         check=True).stdout.split()[-1]
    ext = parse_external_solution(model, open(out).read())
    emb = solve_embedded(model)
    assert ext.objective_value == pytest.approx(emb.objective_value, abs=1e-6)
    assert max_residual(ext) <= 1e-6


# -- oracle ---------------------------------------------------------------------


def test_oracle_single_request():
    res = brute_force_oracle(forced_route())
    assert res.best_maxmin == 5 and res.maxmin_unserved == 0


def test_oracle_unreachable():
    ms = build_metric_space(2, [(0, 1, 9)])
    inst = Instance(ms, (Request(0, 1, 0, 0, 3),), 1, (0,), horizon=20)
    res = brute_force_oracle(inst)
    assert res.best_assignment == {0: None} and res.maxmin_unserved == 1


def test_oracle_guard_rails():
    ms = build_metric_space(2, [(0, 1, 1)])
    reqs = tuple(Request(j, 0, 1, 2 * j, 2 * j + 1) for j in range(9))
    with pytest.raises(GuardRailExceeded):
        brute_force_oracle(Instance(ms, reqs, 1, (0,), horizon=30))
    with pytest.raises(GuardRailExceeded):
        brute_force_oracle(Instance(ms, reqs[:2], 4, (0,) * 4, horizon=30))


def test_oracle_eager_is_more_permissive():
    # picking up as soon as possible lets one server chain both requests
    ms = build_metric_space(2, [(0, 1, 3)])
    inst = Instance(ms, (Request(0, 0, 1, 0, 4), Request(1, 1, 0, 3, 5)), 1, (0,), horizon=12)
    assert brute_force_oracle(inst, timing="eager").maxmin_unserved == 0
    assert brute_force_oracle(inst).maxmin_unserved == 1


# -- offline vs online ------------------------------------------------------------


def network_compatible(inst, result):
    """True if every server's online route survives pickups deferred to the deadline."""
    by_server = {}
    for rec in result.per_request:
        if rec.served:
            by_server.setdefault(rec.server, []).append(inst.request(rec.request_id))
    for sid, reqs in by_server.items():
        pos, free = inst.initial_positions[sid], 0
        for r in reqs:
            if max(free, r.t_begin) + inst.travel_time(pos, r.source) > r.t_end:
                return False
            free, pos = r.t_end + inst.travel_time(r.source, r.dest), r.dest
    return True


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 100_000))
def test_mincost_below_network_feasible_online_runs(seed):
    inst = gen_tiny(seed)
    net = build_network(inst)
    mc = solve_embedded(build_flow_milp(net, objective="mincost", initial_mode="fixed"))
    for policy in (Policy.RANDOM, Policy.GREEDY_MIN, Policy.MIN_DELTA, Policy.ROUND_ROBIN):
        res = simulate(inst, policy, seed=seed)
        if res.unserved == 0 and network_compatible(inst, res):
            assert mc.objective_value <= sum(res.rewards) + 1e-6


def test_online_can_beat_deadline_pickups():
    # the network picks up only at t_end, so an eager online run can be cheaper
    inst = gen_tiny(83)
    res = simulate(inst, Policy.GREEDY_MIN)
    assert res.unserved == 0 and not network_compatible(inst, res)
    mc = solve_embedded(build_flow_milp(build_network(inst), objective="mincost",
                                        initial_mode="fixed"))
    assert mc.objective_value > sum(res.rewards)
