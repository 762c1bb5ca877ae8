import pytest

from vppsim.profile import DeviceProfile, Gamma, LogNormal, Mixture, Point, TruncNormal


def small_profile(**kw) -> DeviceProfile:
    """Deterministic small device: 256 rows x 512 bits, every past-threshold cell flips."""
    base = dict(
        module_id="T0", manufacturer_id="A", vpp_min=1.6,
        hc_first_nominal_dist=Mixture((0.05, 0.95), (Point(20000.0), Gamma(2.0, 10000.0, 20000.0))),
        hc_vpp_factor_dist=TruncNormal(1.08, 0.1, 0.91, 1.5),
        ber_vpp_factor_dist=TruncNormal(0.85, 0.1, 0.4, 1.1),
        retention_nominal_dist=LogNormal(4.5, 1.2, 0.3),
        trcd_min_nominal_dist=Point(10.0), trcd_vpp_slope_dist=Point(1.0),
        rows_per_bank=256, bits_per_row=512, banks=2, ber_density=1e-3,
        flip_probability=1.0, trcd_cell_spread=0.0,
    )
    base.update(kw)
    return DeviceProfile(**base)


@pytest.fixture
def profile():
    return small_profile()
