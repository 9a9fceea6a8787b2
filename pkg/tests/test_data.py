import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pathctr import data


def write(tmp_path, name, text):
    p = tmp_path / name
    p.write_text(text, encoding="utf-8")
    return p


class TestParseInteractions:
    def test_single_row(self, tmp_path):
        p = write(tmp_path, "log.tsv", "u1\ti7\t100\t1\n")
        assert data.parse_interactions(p) == [data.Interaction("u1", "i7", 100, 1)]

    def test_empty_file(self, tmp_path):
        p = write(tmp_path, "log.tsv", "")
        assert data.parse_interactions(p) == []

    def test_bad_timestamp_reports_line_and_field(self, tmp_path):
        p = write(tmp_path, "log.tsv", "u1\ti7\tabc\t1\n")
        with pytest.raises(data.SchemaError, match="line 1, field 3"):
            data.parse_interactions(p)

    def test_bad_label(self, tmp_path):
        p = write(tmp_path, "log.tsv", "u1\ti7\t3\t2\n")
        with pytest.raises(data.SchemaError, match="line 1, field 4"):
            data.parse_interactions(p)

    def test_wrong_arity_line_number(self, tmp_path):
        p = write(tmp_path, "log.tsv", "u1\ti7\t3\t1\nu1\ti7\t9\n")
        with pytest.raises(data.SchemaError, match="line 2"):
            data.parse_interactions(p)

    def test_preserves_file_order(self, tmp_path):
        p = write(tmp_path, "log.tsv", "u2\ti1\t5\t0\nu1\ti2\t1\t1\n")
        rows = data.parse_interactions(p)
        assert [r.user for r in rows] == ["u2", "u1"]


class TestBuildInstances:
    def test_window_collects_prior_clicks(self):
        log = [
            data.Interaction("u", "a", 1, 1),
            data.Interaction("u", "b", 2, 1),
            data.Interaction("u", "c", 3, 1),
        ]
        inst = data.build_instances(log)[-1]
        assert inst.target == "c"
        assert inst.behaviors == ["a", "b"]

    def test_first_interaction_has_empty_window(self):
        log = [data.Interaction("u", "a", 1, 1)]
        assert data.build_instances(log)[0].behaviors == []

    def test_window_caps_at_max_behaviors(self):
        log = [data.Interaction("u", f"i{k}", k, 1) for k in range(12)]
        log.append(data.Interaction("u", "t", 100, 0))
        inst = data.build_instances(log, max_behaviors=10)[-1]
        assert inst.behaviors == [f"i{k}" for k in range(2, 12)]

    def test_non_clicks_never_enter_window(self):
        log = [
            data.Interaction("u", "a", 1, 0),
            data.Interaction("u", "b", 2, 1),
            data.Interaction("u", "c", 3, 1),
        ]
        inst = data.build_instances(log)[-1]
        assert inst.behaviors == ["b"]

    def test_same_timestamp_excluded(self):
        log = [
            data.Interaction("u", "a", 5, 1),
            data.Interaction("u", "b", 5, 1),
        ]
        instances = data.build_instances(log)
        assert instances[0].behaviors == []
        assert instances[1].behaviors == []

    def test_target_never_in_own_window(self):
        log = [
            data.Interaction("u", "a", 1, 1),
            data.Interaction("u", "b", 2, 1),
            data.Interaction("u", "a", 3, 1),
        ]
        inst = data.build_instances(log)[-1]
        assert inst.target == "a"
        assert inst.behaviors == ["b"]

    def test_output_sorted_by_user_then_time(self):
        log = [
            data.Interaction("u2", "a", 9, 1),
            data.Interaction("u1", "b", 4, 1),
            data.Interaction("u1", "c", 2, 0),
        ]
        out = data.build_instances(log)
        assert [(i.user, i.timestamp) for i in out] == [("u1", 2), ("u1", 4), ("u2", 9)]


class TestChronologicalSplit:
    def make_user(self, user, n):
        return [data.Instance(user, f"t{k}", [], 1, timestamp=k) for k in range(n)]

    def test_full_user(self):
        train, test, gs = data.chronological_split(self.make_user("u", 120), 30, 90)
        assert (len(train.instances), len(test.instances), len(gs.instances)) == (90, 30, 0)

    def test_tiny_user_goes_to_graph_source(self):
        train, test, gs = data.chronological_split(self.make_user("u", 5), 30, 90)
        assert (len(train.instances), len(test.instances), len(gs.instances)) == (0, 0, 5)

    def test_boundary_user(self):
        train, test, gs = data.chronological_split(self.make_user("u", 31), 30, 90)
        assert (len(train.instances), len(test.instances), len(gs.instances)) == (1, 30, 0)

    def test_overflow_goes_to_graph_source(self):
        train, test, gs = data.chronological_split(self.make_user("u", 140), 30, 90)
        assert (len(train.instances), len(test.instances), len(gs.instances)) == (90, 30, 20)
        assert max(i.timestamp for i in gs.instances) < min(i.timestamp for i in train.instances)
        assert max(i.timestamp for i in train.instances) < min(i.timestamp for i in test.instances)

    @settings(max_examples=100, deadline=None)
    @given(
        st.lists(st.integers(min_value=0, max_value=60), min_size=1, max_size=8),
        st.integers(min_value=1, max_value=10),
        st.integers(min_value=1, max_value=10),
    )
    def test_roles_partition_exactly(self, sizes, tail, window):
        instances = []
        for u, n in enumerate(sizes):
            instances.extend(data.Instance(f"u{u}", f"t{k}", [], 1, timestamp=k) for k in range(n))
        train, test, gs = data.chronological_split(instances, tail, window)
        combined = sorted(
            (i.user, i.timestamp) for part in (train, test, gs) for i in part.instances
        )
        assert combined == sorted((i.user, i.timestamp) for i in instances)


class TestNegativeSample:
    def positives(self):
        return [data.Instance("u", "p", ["a"], 1, timestamp=7)]

    def test_ratio_five(self):
        pool = {f"i{k}" for k in range(100)}
        res = data.negative_sample(self.positives(), pool, 5, seed=1)
        assert len(res.instances) == 6
        negs = [i for i in res.instances if i.label == 0]
        assert len(negs) == 5
        assert all(n.behaviors == ["a"] and n.user == "u" and n.timestamp == 7 for n in negs)
        assert len({n.target for n in negs}) == 5

    def test_exhausted_pool_warns(self):
        res = data.negative_sample(self.positives(), {"x", "y", "z"}, 5, seed=1)
        assert res.exhausted_pools == 1
        assert len([i for i in res.instances if i.label == 0]) == 3

    def test_deterministic(self):
        pool = {f"i{k}" for k in range(50)}
        a = data.negative_sample(self.positives(), pool, 5, seed=42)
        b = data.negative_sample(self.positives(), pool, 5, seed=42)
        assert [i.target for i in a.instances] == [i.target for i in b.instances]

    def test_never_duplicates_interacted_pair(self):
        pool = {"p", "q", "r", "s"}
        interacted = {"u": {"p", "q"}}
        res = data.negative_sample(self.positives(), pool, 2, seed=3, interacted_by_user=interacted)
        negs = {i.target for i in res.instances if i.label == 0}
        assert negs == {"r", "s"}

    def test_bad_ratio(self):
        with pytest.raises(ValueError):
            data.negative_sample(self.positives(), {"x"}, 0, seed=1)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(
        st.tuples(
            st.integers(min_value=0, max_value=3),
            st.integers(min_value=0, max_value=5),
            st.integers(min_value=0, max_value=30),
            st.integers(min_value=0, max_value=1),
        ),
        min_size=1,
        max_size=40,
    )
)
def test_windows_never_leak_future(rows):
    log = [data.Interaction(f"u{u}", f"i{i}", ts, y) for u, i, ts, y in rows]
    clicked_at = {}
    for it in log:
        if it.label == 1:
            clicked_at.setdefault((it.user, it.item), []).append(it.timestamp)
    for inst in data.build_instances(log, max_behaviors=10):
        for b in inst.behaviors:
            assert b != inst.target
            assert any(ts < inst.timestamp for ts in clicked_at[(inst.user, b)])
        assert len(inst.behaviors) <= 10


def test_profiles_roundtrip(tmp_path):
    p = tmp_path / "profiles.tsv"
    data.write_profiles(
        p,
        [
            ("user", "u1", "uid", "sparse", "u1"),
            ("user", "u1", "activity", "numerical", "0.5"),
            ("item", "i1", "iid", "sparse", "i1"),
        ],
    )
    store = data.parse_profiles(p)
    assert store.user_fields == ["activity", "uid"]
    assert store.item_fields == ["iid"]
    fv = store.features_for("user", "u1")
    assert [f.field_id for f in fv] == ["activity", "uid"]
    assert fv[0].value == 0.5
    assert store.features_for("item", "missing") == []


def test_profiles_bad_kind(tmp_path):
    p = tmp_path / "profiles.tsv"
    p.write_text("user\tu1\tage\tweird\t3\n", encoding="utf-8")
    with pytest.raises(data.SchemaError, match="line 1, field 4"):
        data.parse_profiles(p)


def test_instances_jsonl_roundtrip(tmp_path):
    inst = data.Instance(
        "u1",
        "i2",
        ["a", "b"],
        1,
        [data.FeatureValue("uid", "sparse", "u1")],
        [data.FeatureValue("price", "numerical", 2.5)],
        timestamp=11,
    )
    path = tmp_path / "inst.jsonl"
    data.write_instances(path, [inst])
    (back,) = data.read_instances(path)
    assert back == inst
