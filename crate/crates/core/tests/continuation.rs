//! Reverse-time continuation against finite-difference references.

use pmrtm::fdref::{simulate, Excitation, FdConfig, FdOutput};
use pmrtm::frame::packet;
use pmrtm::grid::{Array2, GridSpec};
use pmrtm::model::{make_gaussian_lens, VelocityModel};
use pmrtm::num_complex::Complex64;
use pmrtm::pipeline::{monitor_launches, plane_pulse};
use pmrtm::rays::{split_schedule, SplitSchedule};
use pmrtm::rtc::{trace_to_source, Engine, Record, RtcConfig};

const N: usize = 256;
const H: f64 = 10.0;
const C0: f64 = 3000.0;

fn grid() -> GridSpec {
    GridSpec::new([N, N], [H, H], [-(N as f64) * H / 2.0, 0.0]).unwrap()
}

fn rel_l2(a: &Array2<f64>, reference: &Array2<f64>) -> f64 {
    let d: f64 = a.data.iter().zip(&reference.data).map(|(x, y)| (x - y).powi(2)).sum();
    d.sqrt() / reference.norm2()
}

/// Upgoing plane pulse: `u(x, z, t) = u0(x, z + c t)`, so `u_t = c du0/dz`.
fn upgoing_pulse(g: &GridSpec, depth: f64) -> (Array2<f64>, Array2<f64>) {
    let u0 = plane_pulse(g, C0, 0.0, depth, 700.0, 300.0, 12.0);
    let d = 1e-3;
    let up = plane_pulse(&GridSpec::new(g.n, g.spacing, [g.origin[0], g.origin[1] + d]).unwrap(), C0, 0.0, depth, 700.0, 300.0, 12.0);
    let dn = plane_pulse(&GridSpec::new(g.n, g.spacing, [g.origin[0], g.origin[1] - d]).unwrap(), C0, 0.0, depth, 700.0, 300.0, 12.0);
    let u1 = Array2::from_fn(g.n, |i, j| C0 * (up.get(i, j) - dn.get(i, j)) / (2.0 * d));
    (u0, u1)
}

fn fd(model: &VelocityModel, u0: Array2<f64>, u1: Option<Array2<f64>>, t_max: f64) -> FdOutput {
    let mut cfg = FdConfig::new(0.001, t_max);
    cfg.record_every = 4;
    simulate(model, None, &grid(), &Excitation::Initial { u0, u1 }, &cfg).unwrap()
}

#[test]
fn constant_medium_single_interval_recovers_initial_field() {
    let g = grid();
    let model = VelocityModel::constant(C0).unwrap().with_bounds(&g);
    let (u0, u1) = upgoing_pulse(&g, 1500.0);
    let out = fd(&model, u0.clone(), Some(u1), 0.8);
    let src = trace_to_source(&out.record, C0).unwrap();
    let sch = SplitSchedule::new(0.0, src.duration(), 1, 2.0 * src.dt()).unwrap();
    let eng = Engine::new(&model, g, &src.grid, RtcConfig::new(4, C0, sch)).unwrap();
    let r = eng.reverse_continue(&src).unwrap();
    let err = rel_l2(&r.field, &u0);
    assert!(err <= 0.15, "relative L2 error {err}");

    // forward modelling from the recovered field re-predicts the record
    let mut u1r = Array2::zeros(g.n);
    for i in 0..g.n[0] {
        for j in 1..g.n[1] - 1 {
            *u1r.get_mut(i, j) = C0 * (r.field.get(i, j + 1) - r.field.get(i, j - 1)) / (2.0 * H);
        }
    }
    let again = fd(&model, r.field.clone(), Some(u1r), 0.8);
    let err = rel_l2(&again.record.data, &out.record.data);
    assert!(err <= 0.2, "re-predicted record error {err}");

    // superposition with a second, laterally mirrored record
    let mirrored = Record::new(src.grid, Array2::from_fn(src.grid.n, |i, j| *src.data.get(src.grid.n[0] - 1 - i, j))).unwrap();
    let both = src.add(&mirrored).unwrap();
    let r2 = eng.reverse_continue(&mirrored).unwrap();
    let r12 = eng.reverse_continue(&both).unwrap();
    let scale = r12.field.max_abs();
    for k in 0..r12.field.data.len() {
        let d = r12.field.data[k] - r.field.data[k] - r2.field.data[k];
        assert!(d.abs() <= 1e-10 * scale);
    }
}

#[test]
fn lens_scene_early_slices_carry_no_energy() {
    let g = grid();
    let model = make_gaussian_lens(C0, 0.4, [0.0, 900.0], [500.0, 500.0]).unwrap().with_bounds(&g);
    let u0 = plane_pulse(&g, C0, 0.0, 1800.0, 700.0, 300.0, 12.0);
    let out = fd(&model, u0, None, 1.0);
    let src = trace_to_source(&out.record, C0).unwrap();
    let sch = split_schedule(&model, C0, &monitor_launches(&g), 0.0, src.duration(), 2.0 * src.dt(), 0.1, 16).unwrap();
    assert_eq!(sch.ns, 4);
    let eng = Engine::new(&model, g, &src.grid, RtcConfig::new(5, C0, sch)).unwrap();
    let r = eng.reverse_continue(&src).unwrap();
    // Part I once per slice, then n - 1 steps for slice n
    assert_eq!(r.snapshots.len(), 4 * 5 / 2);
    let e: Vec<f64> = r.slice_fields.iter().map(|w| w.norm2().powi(2)).collect();
    let total: f64 = e.iter().sum();
    assert!((e[0] + e[1]) / total <= 0.01, "slice energies {e:?}");
}

#[test]
fn halfwave_step_transports_packets_along_straight_rays() {
    let g = grid();
    let model = VelocityModel::constant(C0).unwrap().with_bounds(&g);
    let t1 = 0.1;
    let rec = GridSpec::new([N, 128], [H, 0.004], [g.origin[0], 0.0]).unwrap();
    let eng = Engine::new(&model, g, &rec, RtcConfig::new(5, C0, SplitSchedule::new(0.0, 2.0 * t1, 2, 0.008).unwrap())).unwrap();
    let t = &eng.grid_tiling;
    let centroid = |w: &Array2<Complex64>| {
        // circular mean on the periodic grid
        let mut acc = [Complex64::new(0.0, 0.0); 2];
        for i0 in 0..N {
            for i1 in 0..N {
                let e = w.get(i0, i1).norm_sqr();
                for (a, i) in [(0, i0), (1, i1)] {
                    acc[a] += e * Complex64::from_polar(1.0, 2.0 * std::f64::consts::PI * i as f64 / N as f64);
                }
            }
        }
        acc.map(|z| (z.arg() / (2.0 * std::f64::consts::PI) * N as f64).rem_euclid(N as f64))
    };
    for b in t.boxes.iter().filter(|b| b.k == 4 && b.nu[1] > 0.3).step_by(3) {
        let p = packet(t, b.index, [0, 0]).unwrap();
        let w = Array2::from_fn(g.n, |i0, i1| *p.get((i0 + N / 2) % N, (i1 + N / 2) % N));
        let c0 = centroid(&w);
        let moved = eng.halfwave_step(&w).unwrap();
        let c1 = centroid(&moved);
        // the field carries exp(+iBt), whose group direction is -nu, so a
        // step back in time moves the packet along nu
        for a in 0..2 {
            let expect = t1 * C0 * b.nu[a] / H;
            let got = (c1[a] - c0[a] + N as f64 / 2.0).rem_euclid(N as f64) - N as f64 / 2.0;
            assert!((got - expect).abs() <= 1.0, "box {} axis {a}: moved {got:.2} cells, expected {expect:.2}", b.index);
        }
    }
}
