"""Print the kappa(aspect) table embedded in gatetx.taylor."""

from gatetx.taylor import KAPPA_ASPECT, duct_kappa

if __name__ == "__main__":
    for aspect in KAPPA_ASPECT:
        print(f"    {duct_kappa(float(aspect), terms=400):.8f},  # {aspect:.2f}")
