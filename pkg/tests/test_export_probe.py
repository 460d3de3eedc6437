import numpy as np
import pytest

from hgnn_ima.data import Dataset, DatasetSplit, FeatureStore, MmhnGraph, ModalitySchema
from hgnn_ima.export import attention_columns, export_attention, pair_analysis, pair_analysis_from_csv
from hgnn_ima.fixtures import GRADCHECK_CONFIG, twelve_node_fixture
from hgnn_ima.model import HgnnIma, variant_config
from hgnn_ima.probe import fit_exponent, format_table, ProbeRow, scaled_spec, with_modalities
from hgnn_ima.synthetic import SIZES, generate_synthetic_mmhn


def three_edge_dataset():
    # node 3 receives nothing
    g = MmhnGraph([0, 1, 1, 0], [(1, 0, 0), (2, 0, 0), (0, 1, 1)], ("doc", "person"), ("pd", "dp"))
    schema = ModalitySchema(("text", "vision"), {0: {0, 1}, 1: {0, 1}}, (3, 2), 0, ("x", "y"), 2)
    rng = np.random.default_rng(0)
    store = FeatureStore((rng.standard_normal((4, 3)), rng.standard_normal((4, 2))), schema.presence_for(g))
    return Dataset(g, schema, store, DatasetSplit([0], [], [3], {0: 0, 1: 0, 2: 1, 3: 1}))


def state_of(ds, config=GRADCHECK_CONFIG):
    model = HgnnIma.for_dataset(ds, config)
    params = model.init_params()
    return model, model.forward(params, model.prepare(ds.store), "eval").state


def read_rows(path):
    lines = path.read_text().splitlines()
    return lines[0].split(","), [l.split(",") for l in lines[1:]]


class TestExport:
    def test_row_count_and_columns(self, tmp_path):
        ds = three_edge_dataset()
        model, st = state_of(ds)
        path = export_attention(st, model.graph, -1, tmp_path / "a.csv", ds.split.labels)
        header, rows = read_rows(path)
        assert len(rows) == 3 * GRADCHECK_CONFIG.heads
        assert header == ["target", "source", "edge_type", "head", "alpha_text", "alpha_vision", "lambda_text",
                          "lambda_vision", "beta", "beta_bar", "beta_tilde", "same_label"]
        assert "3" not in {r[0] for r in rows}
        flags = {(r[0], r[1]): r[-1] for r in rows}
        assert flags[("0", "1")] == "1" and flags[("0", "2")] == "0"

    def test_values_round_trip_exactly(self, tmp_path):
        ds = three_edge_dataset()
        model, st = state_of(ds)
        path = export_attention(st, model.graph, 0, tmp_path / "a.csv")
        header, rows = read_rows(path)
        cols = attention_columns(st, 0)
        order = {(int(s), int(d)): e for e, (s, d) in enumerate(zip(st.src, st.dst))}
        for r in rows:
            e, h = order[(int(r[1]), int(r[0]))], int(r[3])
            for name in cols:
                assert float(r[header.index(name)]) == cols[name][e, h]
            assert r[-1] == ""

    def test_no_edges_no_rows(self, tmp_path):
        g = MmhnGraph([0, 1], np.zeros((0, 3), int), ("doc", "person"), ("pd",))
        schema = ModalitySchema(("text",), {0: {0}, 1: {0}}, (2,), 0, ("x", "y"), 2)
        ds = Dataset(g, schema, FeatureStore((np.ones((2, 2)),), schema.presence_for(g)),
                     DatasetSplit([0], [], [], {0: 0}))
        model, st = state_of(ds)
        _, rows = read_rows(export_attention(st, model.graph, 0, tmp_path / "a.csv"))
        assert rows == []

    def test_layer_out_of_range(self, tmp_path):
        ds = three_edge_dataset()
        model, st = state_of(ds)
        with pytest.raises(IndexError):
            export_attention(st, model.graph, GRADCHECK_CONFIG.layers, tmp_path / "a.csv")

    @pytest.mark.parametrize("variant", ["full", "-cross", "+inf", "-adapt"])
    def test_csv_analysis_equals_memory(self, tmp_path, variant):
        ds = twelve_node_fixture(1)
        model, st = state_of(ds, variant_config(GRADCHECK_CONFIG, variant))
        path = export_attention(st, model.graph, -1, tmp_path / "a.csv", ds.split.labels)
        assert pair_analysis_from_csv(path, "text") == pair_analysis(st, ds.split.labels)

    def test_pair_analysis_hand_counts(self):
        ds = three_edge_dataset()
        model, st = state_of(ds)
        pa = pair_analysis(st, ds.split.labels)
        H = GRADCHECK_CONFIG.heads
        # labeled pairs: 1->0 same, 2->0 different, 0->1 same
        assert (pa.positive_pairs, pa.negative_pairs) == (2 * H, H)
        k = -1
        cols = attention_columns(st, k)
        e_neg = int(np.flatnonzero((st.src == 2) & (st.dst == 0))[0])
        assert pa.negative_smaller == int((cols["beta"][e_neg] < cols["alpha_text"][e_neg]).sum())


class TestProbe:
    def test_fit_exponent(self):
        x = np.array([10.0, 20.0, 40.0, 80.0])
        assert fit_exponent(x, 3 * x ** 1.5) == pytest.approx(1.5, rel=1e-12)
        with pytest.raises(ValueError):
            fit_exponent([1.0], [1.0])

    def test_scaled_spec_grows_edges(self):
        base = SIZES["tiny"]
        e1 = generate_synthetic_mmhn(base, 0).graph.edge_count
        e2 = generate_synthetic_mmhn(scaled_spec(base, 2.0), 0).graph.edge_count
        assert 1.6 < e2 / e1 < 2.4

    def test_with_modalities(self):
        spec = with_modalities(SIZES["tiny"], 3)
        ds = generate_synthetic_mmhn(spec, 0)
        assert ds.schema.modality_names == ("text", "vision", "audio")

    def test_format_table(self):
        out = format_table([ProbeRow(10, 20, 2, 0.5)])
        assert out.splitlines()[0].split("\t")[:3] == ["nodes", "edges", "modalities"]
