"""Regenerates copd_synthetic.csv: 60 subjects per arm whose arm means and
standard deviations equal the values below exactly (before rounding)."""
import numpy as np

DOSES = [0.0, 12.5, 25.0, 50.0, 100.0]
MEANS = [1.2500, 1.3170, 1.3420, 1.3580, 1.3900]
SD = 0.22
N = 60
SEED = 20170615


def main(path="copd_synthetic.csv"):
    rng = np.random.default_rng(SEED)
    with open(path, "w") as f:
        f.write("# synthetic COPD-style parallel-group data, FEV1 in liters\n")
        f.write("dose,response\n")
        for d, m in zip(DOSES, MEANS):
            z = rng.standard_normal(N)
            z = (z - z.mean()) / z.std(ddof=1)
            for y in m + SD * z:
                f.write(f"{d:g},{y:.6f}\n")


if __name__ == "__main__":
    main()
