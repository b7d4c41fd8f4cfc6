"""Scenario text format, fingerprinting, and the random instance generator."""

from fractions import Fraction

import pytest

from flowbal.graph import check_circulation, strongly_connected
from flowbal.network import ChannelConfig
from flowbal.protocol import EdgeOrder
from flowbal.scenario import (
    Scenario,
    ScenarioError,
    fingerprint,
    generate,
    load,
    parse,
    save,
    serialize,
    with_seed,
)

SAMPLE = """\
version = 1

[graph]
nodes = 3
edge 1 -> 2   # mass moves 1 to 2
edge 2 -> 3
edge 3 -> 1

[bounds]
1 -> 2 : 3/2, 7/2
2 -> 3 : 1, 2
3 -> 1 : 2, 2

[channel]
kind = delay
tau = 4
delay_range = 1, 3
tau 2 -> 3 = 2

[run]
algorithm = alg1
seed = 11
max_iterations = 500
window = 6

[order]
2 : out 3, in 1
"""


class TestParse:
    def test_sample_file(self):
        sc = parse(SAMPLE)
        assert sc.graph.n == 3
        # "a -> b" is flow direction; stored edge is (head, tail)
        assert sc.graph.edge_set == {(2, 1), (3, 2), (1, 3)}
        assert sc.bounds.lower[(2, 1)] == Fraction(3, 2)
        assert sc.bounds.upper[(2, 1)] == Fraction(7, 2)
        assert sc.bounds.low_int((2, 1)) == 2
        assert sc.channel.kind == "delay"
        assert sc.channel.tau == 4
        assert sc.channel.delay_range == (1, 3)
        assert sc.channel.tau_overrides == (((2, 3), 2),)
        assert sc.algorithm == "change"  # alg1 is an accepted alias
        assert sc.seed == 11
        assert sc.max_iterations == 500
        assert sc.window == 6
        assert sc.order_overrides[2].ranking == ((3, 2), (2, 1))

    def test_desired_alias(self):
        text = SAMPLE.replace("alg1", "alg2").replace("kind = delay", "kind = drop")
        text = text.replace("tau = 4\n", "q = 0.8\n")
        text = text.replace("delay_range = 1, 3\n", "").replace("tau 2 -> 3 = 2\n", "")
        sc = parse(text)
        assert sc.algorithm == "desired"
        assert sc.channel.q == 0.8

    @pytest.mark.parametrize(
        "mangle, line",
        [
            (lambda t: t.replace("version = 1", "version = 9"), 1),
            (lambda t: t.replace("edge 1 -> 2   # mass moves 1 to 2", "edge 1 => 2"), 5),
            (lambda t: t.replace("1 -> 2 : 3/2, 7/2", "1 -> 2 : 3/2"), 10),
            (lambda t: t.replace("2 : out 3, in 1", "2 : out 3"), 27),
            (lambda t: t.replace("2 : out 3, in 1", "2 : out 1, in 1"), 27),
        ],
    )
    def test_errors_carry_line_numbers(self, mangle, line):
        with pytest.raises(ScenarioError) as err:
            parse(mangle(SAMPLE))
        assert err.value.line == line

    def test_missing_bounds_rejected(self):
        text = SAMPLE.replace("2 -> 3 : 1, 2\n", "")
        with pytest.raises(ScenarioError, match="missing bounds"):
            parse(text)

    def test_duplicate_bounds_rejected(self):
        text = SAMPLE.replace("2 -> 3 : 1, 2", "2 -> 3 : 1, 2\n2 -> 3 : 1, 3")
        with pytest.raises(ScenarioError, match="duplicate"):
            parse(text)

    def test_unknown_keys_rejected(self):
        with pytest.raises(ScenarioError, match="unknown run key"):
            parse(SAMPLE.replace("seed = 11", "seed = 11\nspeed = 3"))
        with pytest.raises(ScenarioError, match="unknown channel key"):
            parse(SAMPLE.replace("tau = 4", "tau = 4\nlatency = 2"))

    def test_unknown_algorithm_rejected(self):
        with pytest.raises(ScenarioError, match="unknown algorithm"):
            parse(SAMPLE.replace("alg1", "alg7"))

    def test_version_required_first(self):
        with pytest.raises(ScenarioError, match="version"):
            parse(SAMPLE.replace("version = 1\n", ""))


class TestRoundTrip:
    def cases(self):
        yield parse(SAMPLE)
        yield generate(6, density=0.3, spread=2, seed=7, algorithm="desired")
        yield generate(5, density=0.0, spread=0, seed=2, algorithm="change")
        sc = generate(4, density=0.5, spread=1, seed=3)
        yield Scenario(
            graph=sc.graph,
            bounds=sc.bounds,
            algorithm="change",
            channel=ChannelConfig(
                "drop", q=0.25, q_overrides=(((1, 2), 0.5),)
            ),
            seed=9,
            allow_infeasible=True,
        )

    def test_parse_serialize_identity(self):
        for sc in self.cases():
            again = parse(serialize(sc))
            assert again == sc
            assert fingerprint(again) == fingerprint(sc)

    def test_serialize_is_canonical(self):
        sc = parse(SAMPLE)
        assert serialize(parse(serialize(sc))) == serialize(sc)

    def test_fingerprint_tracks_content(self):
        sc = parse(SAMPLE)
        assert fingerprint(with_seed(sc, 12)) != fingerprint(sc)
        assert len(fingerprint(sc)) == 12

    def test_save_load(self, tmp_path):
        sc = generate(5, density=0.2, seed=4)
        path = tmp_path / "case.flow"
        save(sc, str(path))
        assert load(str(path)) == sc


class TestScenarioValidation:
    def test_bounds_must_match_graph(self):
        sc = generate(4, seed=1)
        other = generate(5, seed=2)
        with pytest.raises(ScenarioError, match="exactly the graph's edges"):
            Scenario(
                graph=other.graph,
                bounds=sc.bounds,
                algorithm="change",
                channel=ChannelConfig("delay", tau=1),
                seed=0,
            )

    def test_algorithm_token_checked(self):
        sc = generate(4, seed=1)
        with pytest.raises(ScenarioError, match="unknown algorithm"):
            Scenario(
                graph=sc.graph,
                bounds=sc.bounds,
                algorithm="alg1",  # aliases are a parser nicety only
                channel=sc.channel,
                seed=0,
            )

    def test_order_override_survives_round_trip(self):
        sc = generate(4, density=0.4, seed=6)
        j = 1
        incident = sc.graph.in_edges(j) + sc.graph.out_edges(j)
        override = EdgeOrder(tuple(reversed(incident)))
        sc2 = Scenario(
            graph=sc.graph,
            bounds=sc.bounds,
            algorithm=sc.algorithm,
            channel=sc.channel,
            seed=sc.seed,
            order_overrides={j: override},
        )
        again = parse(serialize(sc2))
        assert again.order_overrides[j].ranking == override.ranking


class TestGenerate:
    def test_always_feasible_and_connected(self):
        for seed in range(30):
            sc = generate(6, density=0.3, spread=2, seed=seed)
            assert strongly_connected(sc.graph)
            assert check_circulation(sc.graph, sc.bounds).feasible

    def test_seed_changes_instance(self):
        fps = {fingerprint(generate(8, density=0.2, seed=s)) for s in range(10)}
        assert len(fps) == 10

    def test_spread_zero_pins_bounds(self):
        sc = generate(5, density=0.0, spread=0, seed=3)
        assert all(sc.bounds.lower[e] == sc.bounds.upper[e] for e in sc.graph.edges)

    def test_bad_parameters_rejected(self):
        with pytest.raises(ScenarioError):
            generate(1, seed=0)
        with pytest.raises(ScenarioError):
            generate(5, density=1.5, seed=0)
        with pytest.raises(ScenarioError):
            generate(5, spread=-1, seed=0)

    def test_default_channels_per_algorithm(self):
        assert generate(4, seed=0, algorithm="change").channel.kind == "delay"
        assert generate(4, seed=0, algorithm="desired").channel.kind == "drop"
