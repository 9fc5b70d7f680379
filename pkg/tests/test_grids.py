import numpy as np
import pytest

from gyrox.errors import FormatError
from gyrox.grids import (
    DensityGrid,
    quantize_to_storage,
    read_dgrid,
    relative_density,
    write_dgrid,
    write_vtk,
)


class TestDensityGrid:
    def test_length_validation(self):
        with pytest.raises(ValueError):
            DensityGrid((2, 2, 2), np.zeros(7))

    def test_range_validation(self):
        with pytest.raises(ValueError):
            DensityGrid((2, 2, 2), np.full(8, 1.5))
        with pytest.raises(ValueError):
            DensityGrid((2, 2, 2), np.full(8, -0.2))

    def test_as_array_is_x_fastest(self):
        dens = np.arange(8, dtype=float) / 10.0
        g = DensityGrid((2, 2, 2), dens)
        arr = g.as_array()
        # flat index = ix + 2*(iy + 2*iz)
        assert arr[1, 0, 0] == dens[1]
        assert arr[0, 1, 0] == dens[2]
        assert arr[0, 0, 1] == dens[4]

    def test_voxel_size(self):
        g = DensityGrid((4, 2, 8), np.zeros(64), (1.0, 1.0, 2.0))
        assert g.voxel_size == (0.25, 0.5, 0.25)


class TestDgridFormat:
    def test_round_trip(self, tmp_path):
        rng = np.random.default_rng(1)
        g = quantize_to_storage(DensityGrid((3, 4, 5), rng.uniform(0, 1, 60), (1.0, 2.0, 0.5)))
        path = tmp_path / "g.dgrid"
        write_dgrid(g, path)
        back = read_dgrid(path)
        assert back.resolution == g.resolution
        assert back.cell_lengths == g.cell_lengths
        assert np.array_equal(back.densities, g.densities)

    def test_write_read_write_is_byte_stable(self, tmp_path):
        rng = np.random.default_rng(2)
        g = DensityGrid((4, 4, 4), rng.uniform(0, 1, 64))
        p1, p2 = tmp_path / "a.dgrid", tmp_path / "b.dgrid"
        write_dgrid(g, p1)
        write_dgrid(read_dgrid(p1), p2)
        assert p1.read_bytes() == p2.read_bytes()

    def test_header_layout(self, tmp_path):
        g = DensityGrid((2, 3, 4), np.zeros(24), (1.0, 1.0, 1.0))
        path = tmp_path / "h.dgrid"
        write_dgrid(g, path)
        raw = path.read_bytes()
        assert raw[:4] == b"DGRD"
        assert int.from_bytes(raw[4:8], "little") == 1
        assert int.from_bytes(raw[8:12], "little") == 2
        assert int.from_bytes(raw[12:16], "little") == 3
        assert int.from_bytes(raw[16:20], "little") == 4
        assert len(raw) == 4 + 4 + 12 + 24 + 4 * 24

    def test_bad_magic_rejected(self, tmp_path):
        path = tmp_path / "bad.dgrid"
        path.write_bytes(b"NOPE" + b"\x00" * 60)
        with pytest.raises(FormatError):
            read_dgrid(path)

    def test_truncated_payload_rejected(self, tmp_path):
        g = DensityGrid((2, 2, 2), np.zeros(8))
        path = tmp_path / "t.dgrid"
        write_dgrid(g, path)
        path.write_bytes(path.read_bytes()[:-5])
        with pytest.raises(FormatError):
            read_dgrid(path)


class TestVtkExport:
    def test_two_cubed_all_ones(self, tmp_path):
        g = DensityGrid((2, 2, 2), np.ones(8))
        path = tmp_path / "g.vtk"
        write_vtk(g, path)
        text = path.read_text().splitlines()
        assert text[0].startswith("# vtk DataFile")
        assert "DATASET STRUCTURED_POINTS" in text
        assert "DIMENSIONS 3 3 3" in text
        assert "CELL_DATA 8" in text
        assert "SCALARS density float 1" in text
        data = [float(v) for v in text[text.index("LOOKUP_TABLE default") + 1 :]]
        assert data == [1.0] * 8

    def test_density_sum_preserved(self, tmp_path):
        rng = np.random.default_rng(3)
        g = DensityGrid((4, 4, 4), rng.uniform(0, 1, 64))
        path = tmp_path / "g.vtk"
        write_vtk(g, path)
        text = path.read_text().splitlines()
        data = [float(v) for v in text[text.index("LOOKUP_TABLE default") + 1 :]]
        assert sum(data) == pytest.approx(g.densities.sum(), rel=1e-6)


def test_relative_density_mean():
    g = DensityGrid((2, 2, 2), np.array([0, 0, 0, 0, 1, 1, 1, 1], dtype=float))
    assert relative_density(g) == 0.5
