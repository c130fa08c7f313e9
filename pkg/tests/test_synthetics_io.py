import struct

import numpy as np
import pytest
from hypothesis import given, strategies as st

from hypradon import CmpGather, EventSpec, GridError, MaskSpec, RegularGrid2, make_mask, synth_gather
from hypradon.io import (CsvFormatError, RsgFormatError, decode_rsg, encode_rsg, pgm_bytes, read_csv_gather,
                         read_gather, read_rsg, render_pgm, write_csv_gather, write_rsg)
from hypradon.synthetics import gauss_derivative, parse_event_lines, ricker


def test_ricker_shape():
    assert ricker(0.0, 25.0) == 1.0
    # zero crossings at t = +-1 / (pi f sqrt 2)
    tz = 1 / (np.pi * 25.0 * np.sqrt(2))
    np.testing.assert_allclose(ricker([-tz, tz], 25.0), 0.0, atol=1e-15)
    t = np.linspace(-0.2, 0.2, 4001)
    np.testing.assert_allclose(ricker(t, 25.0), ricker(-t, 25.0))


def test_gauss_derivative_peak_and_spectrum():
    t = np.arange(-4096, 4096) * 1e-4
    w = gauss_derivative(t, 30.0)
    assert np.max(np.abs(w)) == pytest.approx(1.0, abs=1e-6)
    np.testing.assert_allclose(w, -gauss_derivative(-t, 30.0))
    spec = np.abs(np.fft.rfft(w))
    freqs = np.fft.rfftfreq(t.size, 1e-4)
    assert freqs[spec.argmax()] == pytest.approx(30.0, abs=freqs[1])


def test_single_event_peaks_on_its_hyperbola():
    grid = RegularGrid2(500, 40, 0.0, 0.004, 0.0, 0.025)
    ev = EventSpec(0.6, 0.5, amplitude=2.0, freq=20.0)
    g = synth_gather(grid, [ev])
    t_peak = grid.axis1[np.argmax(g.data, axis=0)]
    np.testing.assert_allclose(t_peak, ev.traveltime(grid.axis2), atol=grid.d1 / 2 + 1e-12)
    assert g.data[150, 0] == pytest.approx(2.0)


def test_velocity_constructor():
    assert EventSpec.from_velocity(1.0, 2.0).q0 == 0.5
    with pytest.raises(ValueError):
        EventSpec.from_velocity(1.0, 0.0)


def test_noise_is_seeded_and_additive():
    grid = RegularGrid2(100, 10, 0.0, 0.004, 0.0, 0.01)
    ev = [EventSpec(0.2, 0.3, freq=20.0)]
    a = synth_gather(grid, ev, noise_rms=0.1, seed=3)
    b = synth_gather(grid, ev, noise_rms=0.1, seed=3)
    clean = synth_gather(grid, ev)
    assert np.array_equal(a.data, b.data)
    assert np.std(a.data - clean.data) == pytest.approx(0.1, rel=0.1)
    assert not np.array_equal(a.data, synth_gather(grid, ev, noise_rms=0.1, seed=4).data)


@pytest.mark.parametrize("ev", [EventSpec(5.0, 0.3), EventSpec(0.2, 0.3, freq=200.0)])
def test_synth_rejects_out_of_range_events(ev):
    with pytest.raises(ValueError):
        synth_gather(RegularGrid2(100, 10, 0.0, 0.004, 0.0, 0.01), [ev])


@pytest.mark.parametrize("kw", [dict(tau0=0.0, q0=0.1), dict(tau0=1.0, q0=-0.1), dict(tau0=1.0, q0=0.1, freq=0),
                                dict(tau0=1.0, q0=0.1, wavelet="sinc"), dict(tau0=1.0, q0=0.1, polarity=2)])
def test_event_validation(kw):
    with pytest.raises(ValueError):
        EventSpec(**kw)


def test_parse_event_lines():
    evs = parse_event_lines(["# comment", "0.5 0.6 1.0 20", "", "1.0 0.4 -0.5 15  # second"])
    assert [(e.tau0, e.q0, e.amplitude, e.freq) for e in evs] == [(0.5, 0.6, 1.0, 20.0), (1.0, 0.4, -0.5, 15.0)]
    with pytest.raises(ValueError, match="x:2:"):
        parse_event_lines(["0.5 0.6 1 20", "0.5 0.6 1"], "x")
    with pytest.raises(ValueError, match="x:1:"):
        parse_event_lines(["0.5 0.6 one 20"], "x")
    with pytest.raises(ValueError, match="x:1:"):
        parse_event_lines(["-0.5 0.6 1 20"], "x")


def test_random_mask_kills_exact_trace_count():
    grid = RegularGrid2(8, 100)
    m = make_mask(grid, MaskSpec(0.5, seed=1))
    assert m.shape == grid.shape
    assert np.all(m == m[:1])
    assert (~m[0]).sum() == 50
    assert np.array_equal(m, make_mask(grid, MaskSpec(0.5, seed=1)))
    assert not np.array_equal(m, make_mask(grid, MaskSpec(0.5, seed=2)))


def test_regular_decimation_keeps_every_kth_trace():
    m = make_mask(RegularGrid2(4, 12), MaskSpec(0.75, pattern="regular-decimation"))
    assert np.flatnonzero(m[0]).tolist() == [0, 4, 8]


def test_mask_edge_cases():
    assert make_mask(RegularGrid2(4, 5), MaskSpec(0.0)).all()
    with pytest.raises(GridError):
        make_mask(RegularGrid2(4, 2), MaskSpec(0.9))
    for bad in (dict(fraction=1.0), dict(fraction=-0.1), dict(fraction=0.5, pattern="checker")):
        with pytest.raises(ValueError):
            MaskSpec(**bad)


def test_rsg_layout_is_trace_major_float32():
    grid = RegularGrid2(3, 2, 0.0, 0.004, 0.1, 0.025)
    data = np.array([[1.0, 4.0], [2.0, 5.0], [3.0, 6.0]])
    buf = encode_rsg(grid, data)
    assert buf[:4] == b"RSG1"
    assert struct.unpack_from("<II4d", buf, 4) == (3, 2, 0.0, 0.004, 0.1, 0.025)
    assert np.frombuffer(buf, "<f4", offset=struct.calcsize("<4sII4d")).tolist() == [1, 2, 3, 4, 5, 6]
    assert len(buf) == 44 + 24


@given(st.integers(2, 40), st.integers(2, 40), st.integers(0, 2 ** 31 - 1))
def test_rsg_round_trip(n1, n2, seed):
    rng = np.random.default_rng(seed)
    grid = RegularGrid2(n1, n2, 0.0, 0.004, 0.0, 0.01)
    data = rng.standard_normal((n1, n2)).astype(np.float32)
    g2, back = decode_rsg(encode_rsg(grid, data))
    assert g2 == grid and back.dtype == np.float32 and np.array_equal(back, data)


def test_rsg_decoding_errors():
    grid = RegularGrid2(3, 2)
    buf = encode_rsg(grid, np.zeros((3, 2)))
    with pytest.raises(RsgFormatError, match="magic"):
        decode_rsg(b"XXXX" + buf[4:])
    with pytest.raises(RsgFormatError, match="truncated"):
        decode_rsg(buf[:-1])
    with pytest.raises(RsgFormatError, match="trailing"):
        decode_rsg(buf + b"\0")
    with pytest.raises(RsgFormatError, match="short"):
        decode_rsg(buf[:10])
    with pytest.raises(RsgFormatError, match="exceed"):
        decode_rsg(struct.pack("<4sII4d", b"RSG1", 1 << 16, 1 << 16, 0, 1, 0, 1))
    with pytest.raises(RsgFormatError, match="invalid grid"):
        decode_rsg(struct.pack("<4sII4d", b"RSG1", 1, 1, 0, 1, 0, 1) + b"\0" * 4)
    with pytest.raises(ValueError):
        encode_rsg(grid, np.zeros((2, 3)))


def test_rsg_file_round_trip(tmp_path):
    grid = RegularGrid2(5, 4, 0.0, 0.004, 0.0, 0.01)
    g = CmpGather(grid, np.arange(20.0).reshape(5, 4))
    write_rsg(tmp_path / "g.rsg", g)
    assert read_gather(tmp_path / "g.rsg").data.tolist() == g.data.tolist()
    gr, arr = read_rsg(tmp_path / "g.rsg")
    assert gr == grid


def test_csv_round_trip_and_header(tmp_path):
    grid = RegularGrid2(4, 3, 0.1, 0.004, 0.0, 0.025)
    g = CmpGather(grid, np.arange(12.0).reshape(4, 3) / 7)
    path = tmp_path / "g.csv"
    write_csv_gather(path, g)
    back = read_gather(path)
    assert back.grid == grid and np.array_equal(back.data, g.data)
    path.write_text("1,2\n3,4\n")
    assert read_csv_gather(path).grid == RegularGrid2(2, 2)


def test_csv_errors_name_the_line(tmp_path):
    path = tmp_path / "bad.csv"
    path.write_text("#dt=0.004\n1,2,3\n4,5\n")
    with pytest.raises(CsvFormatError, match=":3: ragged"):
        read_csv_gather(path)
    path.write_text("1,2\n3,x\n")
    with pytest.raises(CsvFormatError, match=":2: non-numeric"):
        read_csv_gather(path)
    path.write_text("# nothing\n")
    with pytest.raises(CsvFormatError, match="no data"):
        read_csv_gather(path)


def test_pgm_encoding():
    data = np.array([[-2.0, 0.0, 2.0], [1.0, -1.0, 0.5]])
    buf = pgm_bytes(data, clip_percentile=100)
    head = b"P5\n3 2\n65535\n"
    assert buf.startswith(head)
    px = np.frombuffer(buf[len(head):], ">u2").reshape(2, 3)
    assert px.tolist() == [[0, 32768, 65535], [49151, 16384, 40959]]
    zero = np.frombuffer(pgm_bytes(np.zeros((2, 2)))[len(b"P5\n2 2\n65535\n"):], ">u2")
    assert zero.tolist() == [32768] * 4
    with pytest.raises(ValueError):
        pgm_bytes(data, clip_percentile=10)


def test_render_pgm_writes_file(tmp_path):
    path = tmp_path / "x.pgm"
    render_pgm(np.eye(3), path)
    assert path.read_bytes() == pgm_bytes(np.eye(3))
    assert [p.name for p in tmp_path.iterdir()] == ["x.pgm"]
