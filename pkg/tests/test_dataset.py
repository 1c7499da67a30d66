import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from udm.dataset import (
    DescriptionCorpus,
    build_vocabulary,
    load_category_manifest,
    load_descriptions,
    load_features,
    load_stopwords,
    split_folds,
    tokenize,
    write_features,
)
from udm.errors import (
    DimensionMismatch,
    DuplicateInstanceId,
    InvalidConfig,
    InvalidUtf8,
    MalformedLine,
    MalformedRow,
    TooFewObjects,
)


def write(tmp_path, name, text, encoding="utf-8"):
    p = tmp_path / name
    p.write_text(text, encoding=encoding)
    return p


class TestLoadFeatures:
    def test_two_rows_three_features(self, tmp_path):
        p = write(tmp_path, "f.csv", "instance_id,object_id,f0,f1,f2\n"
                                     "i1,o1,1.0,2.5,-3\ni2,o1,1e-3,0,4E2\n")
        t = load_features(p)
        assert len(t) == 2 and t.dim == 3
        assert t.instance_ids == ("i1", "i2")
        np.testing.assert_array_equal(t.X[1], [1e-3, 0.0, 400.0])

    def test_row_width_mismatch(self, tmp_path):
        p = write(tmp_path, "f.csv", "instance_id,object_id,f0,f1,f2\ni1,o1,1,2,3\ni2,o1,1,2,3,4\n")
        with pytest.raises(DimensionMismatch):
            load_features(p)

    def test_non_numeric(self, tmp_path):
        p = write(tmp_path, "f.csv", "instance_id,object_id,f0\ni1,o1,abc\n")
        with pytest.raises(MalformedRow):
            load_features(p)

    def test_duplicate_instance(self, tmp_path):
        p = write(tmp_path, "f.csv", "instance_id,object_id,f0\ni1,o1,1\ni1,o2,2\n")
        with pytest.raises(DuplicateInstanceId):
            load_features(p)

    def test_703_wide_export_with_manifest(self, tmp_path):
        # same width and category layout as the RGB-D kernel-descriptor export
        rng = np.random.default_rng(0)
        cols = ",".join(f"f{j}" for j in range(703))
        rows = "\n".join(f"i{i},o{i // 4}," + ",".join(f"{v:.6g}" for v in rng.standard_normal(703))
                         for i in range(8))
        p = write(tmp_path, "rgbd.csv", f"instance_id,object_id,{cols}\n{rows}\n")
        m = write(tmp_path, "m.json", json.dumps({"color": [0, 75], "shape": [75, 395],
                                                  "object": [395, 703]}))
        t = load_features(p, m)
        assert t.dim == 703
        assert t.category_slices["shape"] == (75, 395)

    def test_overlapping_manifest_rejected(self, tmp_path):
        p = write(tmp_path, "f.csv", "instance_id,object_id,f0,f1,f2\ni1,o1,1,2,3\n")
        m = write(tmp_path, "m.json", json.dumps({"a": [0, 2], "b": [1, 3]}))
        with pytest.raises(InvalidConfig):
            load_features(p, m)
        assert load_category_manifest(write(tmp_path, "ok.json", '{"a": [0, 1]}')) == {"a": (0, 1)}

    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(3)
        p = tmp_path / "f.csv"
        header = "instance_id,object_id,f0,f1,f2,f3\n"
        body = "".join(f"i{i},o{i % 3}," + ",".join(f"{v:.17g}" for v in rng.standard_normal(4) * 10 ** i) + "\n"
                       for i in range(6))
        p.write_text(header + body)
        t = load_features(p)
        q = tmp_path / "g.csv"
        write_features(t, q)
        t2 = load_features(q)
        assert t2.instance_ids == t.instance_ids and t2.object_ids == t.object_ids
        np.testing.assert_array_equal(t2.X, t.X)
        write_features(t2, tmp_path / "h.csv")
        assert (tmp_path / "h.csv").read_bytes() == q.read_bytes()


class TestDescriptions:
    def test_simple_line(self, tmp_path):
        c = load_descriptions(write(tmp_path, "d.tsv", "obj1\tred round tomato\n\n"), "en")
        assert len(c) == 1
        e = c.entries[0]
        assert (e.object_id, e.tokens) == ("obj1", ("red", "round", "tomato"))

    def test_missing_tab(self, tmp_path):
        with pytest.raises(MalformedLine):
            load_descriptions(write(tmp_path, "d.tsv", "obj1 red tomato\n"))

    def test_invalid_utf8(self, tmp_path):
        p = tmp_path / "d.tsv"
        p.write_bytes(b"obj1\tred \xff\xfe tomato\n")
        with pytest.raises(InvalidUtf8):
            load_descriptions(p)

    def test_hindi_whitespace_split(self, tmp_path):
        c = load_descriptions(write(tmp_path, "d.tsv", "o1\tलाल गोल टमाटर।\n"), "hi")
        assert c.entries[0].tokens == ("लाल", "गोल", "टमाटर")

    def test_stopword_file(self, tmp_path):
        assert load_stopwords(write(tmp_path, "s.txt", "The\nof\n\n")) == {"the", "of"}


class TestTokenize:
    @pytest.mark.parametrize("raw, expected", [
        ("Red, ROUND tomato.", ["red", "round", "tomato"]),
        ("", []),
        ("cube-shaped block", ["cube-shaped", "block"]),
        ("it's (very)  'round'!", ["it's", "very", "round"]),
        ("¿Rojo? ¡sí!", ["rojo", "sí"]),
        ("... --- !!!", []),
    ])
    def test_examples(self, raw, expected):
        assert tokenize(raw) == expected

    @given(st.text())
    def test_idempotent_and_no_empty_tokens(self, raw):
        toks = tokenize(raw)
        assert all(toks)
        assert tokenize(" ".join(toks)) == toks


class TestVocabulary:
    def corpus(self):
        return DescriptionCorpus.from_pairs([("o1", "red ball"), ("o2", "red cube")])

    def test_min_count_two(self):
        v = build_vocabulary(self.corpus(), min_count=2)
        assert [(c.token, c.count, c.positive_objects) for c in v] == [("red", 2, {"o1", "o2"})]

    def test_min_count_one(self):
        v = build_vocabulary(self.corpus(), min_count=1, stopwords=set())
        assert sorted(v.tokens) == ["ball", "cube", "red"]

    def test_default_stopwords(self):
        c = DescriptionCorpus.from_pairs([("o1", "the red ball"), ("o2", "the red cube")])
        assert "the" not in build_vocabulary(c)
        assert "the" in build_vocabulary(c, stopwords=set())

    def test_rejects_zero_min_count(self):
        with pytest.raises(InvalidConfig):
            build_vocabulary(self.corpus(), min_count=0)

    @settings(max_examples=60)
    @given(st.lists(st.tuples(st.sampled_from(["o1", "o2", "o3", "o4"]),
                              st.lists(st.sampled_from(["red", "blue", "cube", "ball", "a"]),
                                       max_size=5)), max_size=12),
           st.integers(1, 3))
    def test_positive_sets_exact(self, pairs, min_count):
        corpus = DescriptionCorpus.from_pairs([(o, " ".join(ws)) for o, ws in pairs])
        vocab = build_vocabulary(corpus, min_count, stopwords=set())
        for c in vocab:
            assert c.count >= min_count
            for o in {"o1", "o2", "o3", "o4"}:
                described = any(e.object_id == o and c.token in e.tokens for e in corpus.entries)
                assert (o in c.positive_objects) == described


class TestFolds:
    def test_even_split(self):
        fa = split_folds([f"o{i}" for i in range(8)], 4, 0)
        assert fa.sizes() == [2, 2, 2, 2]

    def test_uneven_split(self):
        fa = split_folds([f"o{i}" for i in range(9)], 4, 0)
        assert sorted(fa.sizes()) == [2, 2, 2, 3]

    def test_deterministic(self):
        objs = {f"o{i}" for i in range(30)}
        a, b = split_folds(objs, 4, 7), split_folds(sorted(objs, reverse=True), 4, 7)
        assert json.dumps(a.assignment, sort_keys=True) == json.dumps(b.assignment, sort_keys=True)

    def test_too_few(self):
        with pytest.raises(TooFewObjects):
            split_folds(["a", "b"], 4, 0)

    @given(st.integers(2, 60), st.integers(2, 8), st.integers(0, 2**32 - 1))
    def test_balance_property(self, n, k, seed):
        if n < k:
            return
        fa = split_folds([f"x{i}" for i in range(n)], k, seed)
        sizes = fa.sizes()
        assert max(sizes) - min(sizes) <= 1 and sum(sizes) == n
        assert set(fa.assignment.values()) <= set(range(k))
