import numpy as np
import pytest

from asebeta.data import (OBSERVED, RANDOM_MISSING, STRUCTURAL_MISSING,
                          AlleleMap, ConfigError, DataError, Dataset,
                          build_cross_design, load_allele_map, load_dataset,
                          strain_of, write_dataset)


def _write(tmp_path, name, text):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


BASIC = """pup,cross,dam,sire,brain-g1,liver-g1
p1,1Wl,CAST,WSB,0.25,0.75
p2,1Wl,CAST,WSB,NA,0.5
p3,2Xw,WSB,CAST,0.6,NA
"""


def test_load_basic(tmp_path):
    ds, mask, report = load_dataset(_write(tmp_path, "d.csv", BASIC))
    assert (ds.n, ds.J, ds.G) == (3, 2, 2)
    assert ds.cross_codes == ["1Wl", "2Xw"]
    assert ds.dam_strain == ["CAST", "WSB"]
    assert np.isnan(ds.Y[1, 0]) and ds.Y[1, 1] == 0.5
    assert mask.status[1, 0] == RANDOM_MISSING
    assert mask.status[0, 0] == OBSERVED
    assert not report.dropped_cells and not report.rejected_rows
    assert "clean load" in report.to_text()


def test_round_trip(tmp_path):
    ds, _, _ = load_dataset(_write(tmp_path, "d.csv", BASIC))
    out = str(tmp_path / "copy.csv")
    write_dataset(ds, out)
    ds2, _, _ = load_dataset(out)
    assert np.array_equal(ds.Y, ds2.Y, equal_nan=True)
    assert ds2.cross_codes == ds.cross_codes
    assert ds2.pup_ids == ds.pup_ids


def test_out_of_range_dropped_not_clipped(tmp_path):
    text = BASIC + "p4,1Wl,CAST,WSB,0.0001,0.4\n"
    ds, mask, report = load_dataset(_write(tmp_path, "d.csv", text))
    assert len(report.dropped_cells) == 1
    assert report.dropped_cells[0][0] == "p4"
    i = ds.pup_ids.index("p4")
    assert np.isnan(ds.Y[i, 0]) and ds.Y[i, 1] == 0.4


def test_all_na_row_rejected(tmp_path):
    text = BASIC + "p5,1Wl,CAST,WSB,NA,NA\n"
    ds, _, report = load_dataset(_write(tmp_path, "d.csv", text))
    assert "p5" not in ds.pup_ids
    assert report.rejected_rows == ["p5"]


def test_structural_missingness(tmp_path):
    viab = _write(tmp_path, "v.csv", "cross,brain-g1,liver-g1\n2Xw,0,1\n")
    text = BASIC.replace("p3,2Xw,WSB,CAST,0.6,NA", "p3,2Xw,WSB,CAST,NA,0.5")
    ds, mask, _ = load_dataset(_write(tmp_path, "d.csv", text), viab)
    g = ds.cross_codes.index("2Xw")
    assert mask.structural_map[g, 0] and not mask.structural_map[g, 1]
    assert not mask.viable()[g, 0]
    i = ds.pup_ids.index("p3")
    assert mask.status[i, 0] == STRUCTURAL_MISSING


def test_value_in_structural_cell_rejected(tmp_path):
    viab = _write(tmp_path, "v.csv", "cross,brain-g1,liver-g1\n2Xw,0,1\n")
    with pytest.raises(DataError, match="structurally missing"):
        load_dataset(_write(tmp_path, "d.csv", BASIC), viab)


def test_unknown_cross_in_viability(tmp_path):
    viab = _write(tmp_path, "v.csv", "cross,brain-g1,liver-g1\n9Zz,0,1\n")
    with pytest.raises(ConfigError, match="9Zz"):
        load_dataset(_write(tmp_path, "d.csv", BASIC), viab)


def test_bad_header_and_ragged_rows(tmp_path):
    with pytest.raises(DataError, match="header"):
        load_dataset(_write(tmp_path, "d.csv", "a,b,c\n1,2,3\n"))
    with pytest.raises(DataError, match="fields"):
        load_dataset(_write(tmp_path, "d.csv",
                            "pup,cross,dam,sire,g1\np1,c,d,s,0.5,0.7\n"))


def test_strain_suffix_stripped():
    assert strain_of("CAST-102") == "CAST"
    assert strain_of(" WSB ") == "WSB"
    assert strain_of("PWK") == "PWK"


def test_dataset_validate_rejects_bad_values():
    ds = Dataset(Y=np.array([[0.5, 2.0]]), group_of=np.array([0]),
                 tissue_gene_labels=["a", "b"], cross_codes=["c"],
                 dam_strain=["d"], sire_strain=["s"], pup_ids=["p"])
    with pytest.raises(DataError):
        ds.validate()


def test_allele_map_and_cross_design(tmp_path):
    map_path = _write(tmp_path, "a.csv",
                      "strain,allele\nCAST,c\nWSB,b\nPWK,k\n")
    amap = load_allele_map(map_path)
    assert amap.allele_of["CAST"] == "c"
    assert amap.po_group("CAST") == "CAST"

    ds, _, _ = load_dataset(_write(tmp_path, "d.csv", BASIC))
    design = build_cross_design(ds, amap)
    assert design.K_a == 2
    # both strains occur as dam and as sire across the reciprocal pair
    assert design.m_free.all()
    assert design.dam[0] != design.dam[1]


def test_cross_design_one_sided_strain(tmp_path):
    text = ("pup,cross,dam,sire,g1\n"
            "p1,ab,A,B,0.4\n"
            "p2,cb,C,B,0.5\n")
    amap = AlleleMap(allele_of={"A": "A", "B": "B", "C": "C"})
    ds, _, _ = load_dataset(_write(tmp_path, "d.csv", text))
    design = build_cross_design(ds, amap)
    # no strain appears on both sides, so no parent-of-origin effect is free
    assert not design.m_free.any()


def test_cross_design_unknown_strain(tmp_path):
    ds, _, _ = load_dataset(_write(tmp_path, "d.csv", BASIC))
    with pytest.raises(ConfigError, match="CAST"):
        build_cross_design(ds, AlleleMap(allele_of={"WSB": "b"}))
