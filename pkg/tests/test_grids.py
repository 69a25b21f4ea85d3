import pytest
import torch

from hybridgen.grids import decompose, grid_shape, recombine, validate_image


def test_decompose_elementwise():
    z = torch.tensor([1.0, 2.0])
    zq = torch.tensor([1.5, 1.5])
    assert torch.equal(decompose(z, zq), torch.tensor([-0.5, 0.5]))


def test_decompose_identity_case():
    z = torch.randn(2, 4, 3, 3)
    assert torch.equal(decompose(z, z), torch.zeros_like(z))


def test_recombine_additive_identity():
    zq = torch.randn(1, 4, 2, 2)
    assert torch.equal(recombine(torch.zeros_like(zq), zq), zq)


def test_recombine_inverts_decompose_example():
    zr = torch.tensor([-0.5, 0.5])
    zq = torch.tensor([1.5, 1.5])
    assert torch.equal(recombine(zr, zq), torch.tensor([1.0, 2.0]))


def dyadic(shape, gen):
    # Random multiples of 2^-10 in [-8, 8): float32 add/sub on this lattice is
    # exact, so inverse-pair checks are free of rounding noise.
    return torch.randint(-8192, 8192, shape, generator=gen).float() / 1024.0


def test_decompose_recombine_exact_inverses():
    gen = torch.Generator().manual_seed(7)
    for _ in range(5):
        z = dyadic((2, 4, 3, 3), gen)
        zq = dyadic((2, 4, 3, 3), gen)
        assert torch.equal(recombine(decompose(z, zq), zq), z)
        zr = dyadic((2, 4, 3, 3), gen)
        assert torch.equal(decompose(recombine(zr, zq), zq), zr)


def test_shape_mismatch_raises():
    with pytest.raises(ValueError):
        decompose(torch.zeros(2, 3), torch.zeros(3, 2))
    with pytest.raises(ValueError):
        recombine(torch.zeros(1, 2, 2, 2), torch.zeros(1, 2, 2, 3))


@pytest.mark.parametrize(
    "hw,f,expected",
    [((256, 256), 32, (8, 8)), ((512, 512), 32, (16, 16)), ((32, 32), 8, (4, 4))],
)
def test_grid_shape_law(hw, f, expected):
    assert grid_shape(*hw, f) == expected


def test_grid_shape_rejects_indivisible():
    with pytest.raises(ValueError):
        grid_shape(100, 100, 32)


def test_validate_image_checks_layout_and_finiteness():
    with pytest.raises(ValueError):
        validate_image(torch.zeros(1, 1, 8, 8))
    bad = torch.zeros(1, 3, 8, 8)
    bad[0, 0, 0, 0] = float("nan")
    with pytest.raises(ValueError):
        validate_image(bad)
    validate_image(torch.zeros(1, 3, 8, 8), factor=8)
    with pytest.raises(ValueError):
        validate_image(torch.zeros(1, 3, 12, 12), factor=8)
