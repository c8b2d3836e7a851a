"""Rewrite the frozen regression fixtures in this directory.

Run from the repository root: ``python3 tests/golden/regenerate.py``.
Only do this after a deliberate change of numerics; the tests compare
against these files.
"""
import json
import sys
from pathlib import Path


HERE = Path(__file__).resolve().parent
sys.path.insert(0, str(HERE.parent))

from oracles import caccioppoli_inputs, mpi_inputs  # noqa: E402

from homog.cell import matrices  # noqa: E402
from homog.field import MarginalLaw, TriadicCube, sample_field, save_field  # noqa: E402
from homog.norms import check_caccioppoli, check_mpi  # noqa: E402
from homog.stats import run_multiscale_study  # noqa: E402


def main():
    mpi = []
    for u, n in mpi_inputs():
        r = check_mpi(u, n)
        mpi.append([r.ratio_u, r.ratio_v, r.ratio_v_dual, r.ratio_w])
    cacc = [check_caccioppoli(f, r, u) for f, r, u in caccioppoli_inputs()]
    (HERE / "norm_ratios.json").write_text(json.dumps({"mpi": mpi, "caccioppoli": cacc}, indent=1) + "\n")

    law = MarginalLaw.two_point(1.0, 4.0, 0.5)
    cube = TriadicCube.centered(2, 2)
    fld = sample_field(law, 42, cube)
    save_field(fld, HERE / "field_two_point_seed42_n2.json")
    rep = matrices(fld, cube, 4)
    (HERE / "report_two_point_seed42_n2.json").write_text(json.dumps(rep.to_json(), indent=1) + "\n")

    studies = run_multiscale_study(law, [0, 1], 6, 4, 7, 2)
    doc = {f"n{s.n}": {"mean_a": s.mean_a.tolist(), "se_a": s.se_a.tolist(), "abar_n": s.abar_n.tolist()}
           for s in studies}
    (HERE / "study_two_point_seed7.json").write_text(json.dumps(doc, indent=1) + "\n")


if __name__ == "__main__":
    main()
