"""Per-iteration cost against |E| (fixed modalities) and against |M| (fixed graph).

    python scripts/run_probe.py --repeats 5
"""
import argparse

from hgnn_ima.model import ModelConfig
from hgnn_ima.probe import edge_scaling, format_table, modality_ratio
from hgnn_ima.synthetic import SIZES


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--edge-base", default="small", choices=sorted(SIZES))
    ap.add_argument("--modality-base", default="medium", choices=sorted(SIZES))
    ap.add_argument("--factors", default="1,2,4")
    ap.add_argument("--repeats", type=int, default=5)
    args = ap.parse_args()

    cfg = ModelConfig()
    rows, exponent = edge_scaling(SIZES[args.edge_base], tuple(float(f) for f in args.factors.split(",")), cfg,
                                  args.repeats)
    print(format_table(rows))
    print(f"edge_exponent\t{exponent:.3f}\n")
    rows, ratio = modality_ratio(SIZES[args.modality_base], 2, 3, cfg, args.repeats)
    print(format_table(rows))
    print(f"modality_ratio_2_to_3\t{ratio:.3f}")


if __name__ == "__main__":
    main()
