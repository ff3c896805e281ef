import numpy as np
import pytest

from feedmask.errors import (
    ExtractionEmptyError,
    GatewayError,
    TransportError,
    UserMismatchError,
)
from feedmask.gateway import Gateway, HashEmbedder, ScriptedStub, StaticEmbedder
from feedmask.graph import PreferenceGraph
from feedmask.pipeline import (
    MERGE_KEY,
    FeatureExtraction,
    Impression,
    IngestPlan,
    InteractionPair,
    Item,
    PerceptionReport,
    ProfileView,
    apply_effects,
    format_bands,
    perceive,
    plan_ingest,
    reflect,
    sample_pairs,
    summarize,
)

I1 = Item("i1", "The Midnight Lighthouse")
I2 = Item("i2", "Cooking with Iron Pots")
I3 = Item("i3", "Galaxy Probe Sets Record")


def impression(*flags, iid="imp-001", uid="u1"):
    items = [I1, I2, I3]
    return Impression(
        impression_id=iid,
        user_id=uid,
        timestamp="2024-01-01T00:00:00Z",
        displayed=[(items[k], flags[k]) for k in range(len(flags))],
    )


def empty_view():
    return ProfileView(version=0, profile=PreferenceGraph().band(PreferenceGraph().rank()))


class RecordingBackend:
    def __init__(self, inner):
        self.inner = inner
        self.backend_id = inner.backend_id
        self.requests = []

    def complete(self, request):
        self.requests.append(request)
        return self.inner.complete(request)

    def keys_seen(self):
        return [r.script_key for r in self.requests]


class TestSamplePairs:
    def test_single_click_seeded(self):
        imp = impression(True, False, False)
        pairs = sample_pairs(imp, np.random.default_rng(7))
        assert len(pairs) == 1
        assert pairs[0].pos.id == "i1"
        assert pairs[0].neg.id in {"i2", "i3"}
        again = sample_pairs(imp, np.random.default_rng(7))
        assert again[0].neg.id == pairs[0].neg.id

    def test_no_unclicked(self):
        assert sample_pairs(impression(True, True, True), np.random.default_rng(0)) == []

    def test_no_clicks(self):
        assert sample_pairs(impression(False, False, False), np.random.default_rng(0)) == []

    def test_two_clicks_one_unclicked(self):
        pairs = sample_pairs(impression(True, False, True), np.random.default_rng(3))
        assert [p.pos.id for p in pairs] == ["i1", "i3"]
        assert all(p.neg.id == "i2" for p in pairs)

    def test_pair_rejects_same_item(self):
        with pytest.raises(ValueError):
            InteractionPair(I1, I1, "x", "t")

    def test_item_validation(self):
        with pytest.raises(ValueError):
            Item("", "title")
        with pytest.raises(ValueError):
            Item("id", "")

    def test_impression_validation(self):
        with pytest.raises(ValueError):
            Impression("i", "u", "t", [])


class TestPerceive:
    def pair(self):
        return InteractionPair(I1, I2, "imp-001", "t")

    def test_scripted_reasons(self):
        stub = ScriptedStub()
        stub.register("perceive/v1", text="Full of suspense.", contains="Midnight Lighthouse")
        stub.register("perceive/v1", text="Cooking bores the user.", contains="Cooking with Iron Pots")
        gw = Gateway(stub, HashEmbedder())
        report = perceive(self.pair(), empty_view(), gw)
        assert "suspense" in report.pos_reasons
        assert "bores" in report.neg_reasons
        assert report.profile_snapshot_version == 0

    def test_cold_start_renders_empty_bands(self):
        stub = ScriptedStub()
        stub.register("perceive/v1", text="some reason")
        backend = RecordingBackend(stub)
        gw = Gateway(backend, HashEmbedder())
        perceive(self.pair(), empty_view(), gw)
        prompt = backend.requests[0].messages[-1].text
        for band in ("Very liked", "Fairly liked", "Neutral", "Fairly disliked", "Very disliked"):
            assert f"{band}: (none)" in prompt

    def test_bands_rendered_with_labels(self):
        graph = PreferenceGraph()
        emb = HashEmbedder()
        a, _ = graph.upsert_feature("suspense", emb.embed("suspense"))
        b, _ = graph.upsert_feature("cooking", emb.embed("cooking"))
        graph.add_preference_edge(b, a)
        profile = graph.band(graph.rank())
        text = format_bands(profile)
        assert "Very liked: suspense" in text
        assert "Fairly liked: cooking" in text

    def test_blank_reply_is_gateway_error(self):
        stub = ScriptedStub()
        stub.register("perceive/v1", text="   ")
        gw = Gateway(stub, HashEmbedder())
        with pytest.raises(GatewayError):
            perceive(self.pair(), empty_view(), gw)

    def test_backend_failure_propagates(self):
        class Down:
            backend_id = "down"

            def complete(self, request):
                raise TransportError("no route")

        gw = Gateway(Down(), HashEmbedder())
        with pytest.raises(GatewayError):
            perceive(self.pair(), empty_view(), gw)


class TestSummarize:
    def report(self):
        return PerceptionReport("liked the suspense", "cooking is dull", 0)

    def pair(self):
        return InteractionPair(I1, I2, "imp-001", "t")

    def gateway(self, pos_features, neg_features):
        stub = ScriptedStub()
        stub.register("summary/v1", json_body={"features": pos_features}, contains="Midnight Lighthouse")
        stub.register("summary/v1", json_body={"features": neg_features}, contains="Cooking with Iron Pots")
        return Gateway(stub, HashEmbedder())

    def test_cartesian_product_2x3(self):
        gw = self.gateway(["a", "b"], ["x", "y", "z"])
        ext = summarize(self.pair(), self.report(), gw)
        assert ext.ordered_pairs == [
            ("a", "x"), ("a", "y"), ("a", "z"),
            ("b", "x"), ("b", "y"), ("b", "z"),
        ]

    def test_one_by_one(self):
        ext = summarize(self.pair(), self.report(), self.gateway(["a"], ["x"]))
        assert ext.ordered_pairs == [("a", "x")]

    def test_empty_pos_raises(self):
        with pytest.raises(ExtractionEmptyError):
            summarize(self.pair(), self.report(), self.gateway([], ["x"]))

    def test_empty_neg_raises(self):
        with pytest.raises(ExtractionEmptyError):
            summarize(self.pair(), self.report(), self.gateway(["a"], []))

    def test_duplicate_features_collapse(self):
        gw = self.gateway(["Cats", "cats", "  CATS "], ["x"])
        ext = summarize(self.pair(), self.report(), gw)
        assert ext.pos_features == ["Cats"]

    def test_blank_features_dropped(self):
        with pytest.raises(ExtractionEmptyError):
            summarize(self.pair(), self.report(), self.gateway(["  "], ["x"]))


class TestReflect:
    def test_dissimilar_features_insert_without_merge_queries(self):
        graph = PreferenceGraph()
        stub = ScriptedStub()
        backend = RecordingBackend(stub)
        gw = Gateway(backend, HashEmbedder())
        ext = FeatureExtraction(["suspense", "sea stories"], ["cooking"])
        effects = reflect(graph, ext, gw)
        assert MERGE_KEY not in backend.keys_seen()
        assert len(graph.nodes) == 3
        assert graph.total_edge_weight == 2
        assert [op["op"] for op in effects] == ["new_node", "new_node", "new_node", "edge", "edge"]

    def test_confirmed_merge_absorbs_label(self):
        emb = StaticEmbedder(dim=4)
        emb.pin("horror movies", [1, 0, 0, 0])
        emb.pin("horror films", [0.95, np.sqrt(1 - 0.95**2), 0, 0])
        emb.pin("cooking", [0, 0, 1, 0])
        graph = PreferenceGraph()
        survivor, _ = graph.upsert_feature("horror movies", emb.embed("horror movies"))
        stub = ScriptedStub()
        stub.register(
            MERGE_KEY,
            json_body={"merge": True, "targets": ["horror movies"]},
            contains="horror films",
        )
        gw = Gateway(stub, emb)
        effects = reflect(graph, FeatureExtraction(["horror films"], ["cooking"]), gw)
        assert len(graph.nodes) == 2
        assert graph.find_label("horror films") == survivor
        assert "horror films" in graph.nodes[survivor].absorbed_labels
        cooking = graph.find_label("cooking")
        assert graph.edges == {(cooking, survivor): 1}
        assert effects[0] == {"op": "absorb", "survivorId": survivor, "label": "horror films"}

    def test_declined_merge_inserts_new_node(self):
        emb = StaticEmbedder(dim=4)
        emb.pin("horror movies", [1, 0, 0, 0])
        emb.pin("horror films", [0.95, np.sqrt(1 - 0.95**2), 0, 0])
        emb.pin("cooking", [0, 0, 1, 0])
        graph = PreferenceGraph()
        graph.upsert_feature("horror movies", emb.embed("horror movies"))
        stub = ScriptedStub()
        stub.register(MERGE_KEY, json_body={"merge": False}, contains="horror films")
        gw = Gateway(stub, emb)
        reflect(graph, FeatureExtraction(["horror films"], ["cooking"]), gw)
        assert len(graph.nodes) == 3

    def test_merge_with_unresolvable_target_uses_closest(self):
        emb = StaticEmbedder(dim=4)
        emb.pin("horror movies", [1, 0, 0, 0])
        emb.pin("horror films", [0.95, np.sqrt(1 - 0.95**2), 0, 0])
        emb.pin("cooking", [0, 0, 1, 0])
        graph = PreferenceGraph()
        survivor, _ = graph.upsert_feature("horror movies", emb.embed("horror movies"))
        stub = ScriptedStub()
        stub.register(
            MERGE_KEY,
            json_body={"merge": True, "targets": ["never heard of it"]},
            contains="horror films",
        )
        gw = Gateway(stub, emb)
        reflect(graph, FeatureExtraction(["horror films"], ["cooking"]), gw)
        assert graph.find_label("horror films") == survivor

    def test_merge_joining_two_existing_nodes(self):
        emb = StaticEmbedder(dim=4)
        base = np.array([1.0, 0, 0, 0])
        near = np.array([0.9, np.sqrt(1 - 0.81), 0, 0])
        emb.pin("sea tales", base)
        emb.pin("ocean stories", near)
        emb.pin("maritime fiction", (base + near) / np.linalg.norm(base + near))
        emb.pin("cooking", [0, 0, 1, 0])
        graph = PreferenceGraph()
        a, _ = graph.upsert_feature("sea tales", emb.embed("sea tales"))
        b, _ = graph.upsert_feature("ocean stories", emb.embed("ocean stories"))
        cooking, _ = graph.upsert_feature("cooking", emb.embed("cooking"))
        graph.add_preference_edge(cooking, b)
        stub = ScriptedStub()
        stub.register(
            MERGE_KEY,
            json_body={"merge": True, "targets": ["sea tales", "ocean stories"]},
            contains="maritime fiction",
        )
        gw = Gateway(stub, emb)
        reflect(graph, FeatureExtraction(["maritime fiction"], ["cooking"]), gw)
        assert b not in graph.nodes
        assert graph.find_label("ocean stories") == a
        assert graph.find_label("maritime fiction") == a
        # the pre-existing cooking->b edge was re-pointed, then the new pair added
        assert graph.edges == {(cooking, a): 2}

    def test_edge_weight_grows_by_m_times_n(self):
        graph = PreferenceGraph()
        gw = Gateway(ScriptedStub(), HashEmbedder())
        ext = FeatureExtraction(["suspense", "sea stories"], ["cooking", "politics", "space news"])
        before = graph.total_edge_weight
        reflect(graph, ext, gw)
        assert graph.total_edge_weight - before == 6

    def test_pair_collapsing_to_one_node_drops_self_loop(self):
        graph = PreferenceGraph()
        gw = Gateway(ScriptedStub(), HashEmbedder())
        reflect(graph, FeatureExtraction(["horror"], ["horror"]), gw)
        assert graph.total_edge_weight == 0
        assert graph.discarded_self_loop_weight == 1


def scripted_first_impression():
    stub = ScriptedStub()
    stub.register("perceive/v1", text="Suspense at sea appeals to the user.", contains="Midnight Lighthouse")
    stub.register("perceive/v1", text="Space updates feel dry.", contains="Galaxy Probe")
    stub.register("perceive/v1", text="Kitchen content feels dull.", contains="Cooking with Iron Pots")
    stub.register("summary/v1", json_body={"features": ["suspense", "sea stories"]}, contains="Midnight Lighthouse")
    stub.register("summary/v1", json_body={"features": ["space news"]}, contains="Galaxy Probe")
    stub.register("summary/v1", json_body={"features": ["cooking"]}, contains="Cooking with Iron Pots")
    return stub


class TestPlanIngest:
    def test_fixture_impression_hand_composed_deltas(self):
        # Hand composition, frozen before implementation:
        #   seed 7 draws index 1 of the two unclicked items -> neg = i3
        #   one pair: pos i1 (m=2 features), neg i3 (n=1)
        #   empty graph -> no merge queries; 3 new nodes, 2 edges n3->n1, n3->n2
        base = PreferenceGraph()
        gw = Gateway(scripted_first_impression(), HashEmbedder())
        plan = plan_ingest(
            base, impression(True, False, False), gw, np.random.default_rng(7), empty_view()
        )
        assert plan.pairs_sampled == 1
        assert plan.pairs_applied == 1
        assert plan.skipped == []
        ops = [(op["op"], op.get("label") or (op.get("src"), op.get("dst"))) for op in plan.effects]
        assert ops == [
            ("new_node", "suspense"),
            ("new_node", "sea stories"),
            ("new_node", "space news"),
            ("edge", ("n000003", "n000001")),
            ("edge", ("n000003", "n000002")),
        ]
        assert len(plan.graph.nodes) == 3
        assert plan.graph.total_edge_weight == 2
        # input graph untouched
        assert len(base.nodes) == 0
        # banding of the resulting graph: symmetric inflow ties broken by age
        profile = plan.graph.band(plan.graph.rank())
        assert profile.bands[0] == ["suspense"]
        assert profile.bands[1] == ["sea stories"]
        assert profile.bands[2] == ["space news"]

    def test_effect_replay_reproduces_graph(self):
        base = PreferenceGraph()
        gw = Gateway(scripted_first_impression(), HashEmbedder())
        plan = plan_ingest(
            base, impression(True, False, False), gw, np.random.default_rng(7), empty_view()
        )
        replayed = base.copy()
        apply_effects(replayed, plan.effects)
        assert replayed.to_json() == plan.graph.to_json()

    def test_second_impression_reuses_existing_labels(self):
        base = PreferenceGraph()
        gw = Gateway(scripted_first_impression(), HashEmbedder())
        first = plan_ingest(
            base, impression(True, False, False), gw, np.random.default_rng(7), empty_view()
        )
        items = [
            Item("i4", "Deep Sea Mystery Novel"),
            Item("i5", "Budget Cooking Tips"),
            Item("i6", "Election Brief"),
        ]
        imp2 = Impression(
            impression_id="imp-002",
            user_id="u1",
            timestamp="2024-01-01T00:00:01Z",
            displayed=[(items[0], True), (items[1], False), (items[2], True)],
        )
        stub = ScriptedStub()
        stub.register("perceive/v1", text="More sea mystery please.", contains="Deep Sea Mystery")
        stub.register("perceive/v1", text="Politics catches the eye.", contains="Election Brief")
        stub.register("perceive/v1", text="Cooking holds no interest.", contains="Budget Cooking")
        stub.register("summary/v1", json_body={"features": ["sea stories"]}, contains="Deep Sea Mystery")
        stub.register("summary/v1", json_body={"features": ["politics"]}, contains="Election Brief")
        stub.register("summary/v1", json_body={"features": ["cooking"]}, contains="Budget Cooking")
        gw2 = Gateway(stub, HashEmbedder())
        second = plan_ingest(
            first.graph, imp2, gw2, np.random.default_rng(0), ProfileView(1, first.graph.band(first.graph.rank()))
        )
        assert second.pairs_sampled == 2
        assert second.pairs_applied == 2
        ops = [(op["op"], op.get("label") or (op.get("src"), op.get("dst"))) for op in second.effects]
        # "sea stories" and the second pair's "cooking" hit the label index;
        # only the genuinely new labels create nodes
        assert ops == [
            ("new_node", "cooking"),
            ("edge", ("n000004", "n000002")),
            ("new_node", "politics"),
            ("edge", ("n000004", "n000005")),
        ]
        assert len(second.graph.nodes) == 5
        assert second.graph.total_edge_weight == 4

    def test_zero_click_impression_changes_nothing(self):
        base = PreferenceGraph()
        gw = Gateway(ScriptedStub(), HashEmbedder())
        plan = plan_ingest(
            base, impression(False, False, False), gw, np.random.default_rng(0), empty_view()
        )
        assert plan.pairs_sampled == 0
        assert plan.effects == []
        assert plan.graph.to_json() == base.to_json()

    def test_user_mismatch_rejected(self):
        gw = Gateway(ScriptedStub(), HashEmbedder())
        with pytest.raises(UserMismatchError):
            plan_ingest(
                PreferenceGraph(),
                impression(True, False, False, uid="intruder"),
                gw,
                np.random.default_rng(0),
                empty_view(),
                expected_user_id="u1",
            )

    def test_gateway_failure_skips_only_that_pair(self):
        # two pairs; the perceive script covers pair 2's items only, so
        # pair 1 dies with NoScriptError (a GatewayError) and is logged
        items = [
            Item("i4", "Deep Sea Mystery Novel"),
            Item("i5", "Budget Cooking Tips"),
            Item("i6", "Election Brief"),
        ]
        imp = Impression(
            impression_id="imp-003",
            user_id="u1",
            timestamp="t",
            displayed=[(items[0], True), (items[1], False), (items[2], True)],
        )
        stub = ScriptedStub()
        stub.register("perceive/v1", text="Politics!", contains="Election Brief")
        stub.register("perceive/v1", text="Cooking, no.", contains="Budget Cooking", attempt=1)
        stub.register("summary/v1", json_body={"features": ["politics"]}, contains="Election Brief")
        stub.register("summary/v1", json_body={"features": ["cooking"]}, contains="Budget Cooking")
        gw = Gateway(stub, HashEmbedder())
        plan = plan_ingest(imp_graph := PreferenceGraph(), imp, gw, np.random.default_rng(0), empty_view())
        assert plan.pairs_sampled == 2
        assert plan.pairs_applied == 1
        assert len(plan.skipped) == 1
        assert plan.skipped[0]["posId"] == "i4"
        assert plan.skipped[0]["stage"] == "perceive"
        assert len(plan.graph.nodes) == 2

    def test_empty_extraction_skips_pair(self):
        stub = scripted_first_impression()
        stub2 = ScriptedStub()
        stub2.register("perceive/v1", text="reason")
        stub2.register("summary/v1", json_body={"features": []}, contains="Midnight Lighthouse")
        stub2.register("summary/v1", json_body={"features": ["space news"]}, contains="Galaxy Probe")
        gw = Gateway(stub2, HashEmbedder())
        plan = plan_ingest(
            PreferenceGraph(), impression(True, False, False), gw, np.random.default_rng(7), empty_view()
        )
        assert plan.pairs_applied == 0
        assert plan.skipped[0]["stage"] == "summarize"
        assert plan.effects == []

    def test_edge_delta_matches_m_times_n_minus_self_loops(self):
        base = PreferenceGraph()
        gw = Gateway(scripted_first_impression(), HashEmbedder())
        plan = plan_ingest(
            base, impression(True, False, False), gw, np.random.default_rng(7), empty_view()
        )
        m_times_n = sum(
            len(e["posFeatures"]) * len(e["negFeatures"]) for e in plan.extractions
        )
        delta_edges = plan.graph.total_edge_weight - base.total_edge_weight
        delta_dropped = plan.graph.discarded_self_loop_weight - base.discarded_self_loop_weight
        assert delta_edges + delta_dropped == m_times_n
