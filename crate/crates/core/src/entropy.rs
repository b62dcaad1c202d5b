//! Entropy from relative volume: S = k ln v per wave function, additive over
//! separate systems with an optional identical-particle correction, plus the
//! closed-form ideal-gas expressions the discrete picture is meant to
//! reproduce and a per-tick instrumentation record.

use alloc::string::ToString;
use alloc::vec::Vec;

// float intrinsics come from this trait in standalone no_std builds; whenever
// std enters the crate graph (tests, std-enabled consumers) the inherent
// methods shadow it and the import looks unused
#[allow(unused_imports)]
use num_traits::Float;

use crate::error::CoreError;
use crate::event::{CollapseEvent, Mechanism};
use crate::registry::WaveFunctionRegistry;
use crate::wavefunction::DiscreteWaveFunction;

/// S = k ln v with v the relative volume at base magnitude `f0`.
pub fn wavefunction_entropy(
    psi: &DiscreteWaveFunction,
    f0: f64,
    k: f64,
) -> Result<f64, CoreError> {
    let v = psi.relative_volume(f0);
    if v == 0 {
        return Err(CoreError::VanishedWaveFunction);
    }
    Ok(k * (v as f64).ln())
}

/// Total entropy of a registry: the sum of member entropies, optionally
/// reduced by k ln(N_c!) for each identity class c counted across the whole
/// system, since configurations differing only by a permutation of identical
/// particles should not be double counted.
pub fn system_entropy(
    registry: &WaveFunctionRegistry,
    f0: f64,
    k: f64,
    identical_correction: bool,
) -> Result<f64, CoreError> {
    let mut total = 0.0;
    for (id, wf) in registry.iter() {
        total += wavefunction_entropy(wf, f0, k).map_err(|e| e.for_wave_function(id))?;
    }
    if identical_correction {
        let mut class_counts: Vec<(&str, u64)> = Vec::new();
        for (_, wf) in registry.iter() {
            for p in wf.particles() {
                if let Some(name) = p.identity_class() {
                    match class_counts.iter_mut().find(|(c, _)| *c == name) {
                        Some((_, n)) => *n += 1,
                        None => class_counts.push((name, 1)),
                    }
                }
            }
        }
        for (_, n) in class_counts {
            total -= k * ln_factorial(n);
        }
    }
    Ok(total)
}

/// ln(n!) — an exact cumulative sum up to 2^20, the Stirling series with the
/// 1/(12n) and 1/(360 n^3) corrections beyond (relative error < 1e-12 there).
pub fn ln_factorial(n: u64) -> f64 {
    if n < 2 {
        return 0.0;
    }
    if n <= (1 << 20) {
        let mut acc = 0.0f64;
        let mut c = 0.0f64; // compensated: ln-terms span many magnitudes
        for i in 2..=n {
            let y = (i as f64).ln() - c;
            let t = acc + y;
            c = (t - acc) - y;
            acc = t;
        }
        acc
    } else {
        let x = n as f64;
        let two_pi = 2.0 * core::f64::consts::PI;
        x * x.ln() - x + 0.5 * (two_pi * x).ln() + 1.0 / (12.0 * x)
            - 1.0 / (360.0 * x * x * x)
    }
}

/// A classical monatomic gas: N molecules of mass m in volume V at
/// temperature T, on phase-space cells of side beta * h.
#[derive(Debug, Clone, PartialEq)]
pub struct IdealGas {
    pub n: u64,
    pub volume: f64,
    pub temperature: f64,
    pub mass: f64,
    pub h: f64,
    pub k: f64,
    pub beta: f64,
}

impl IdealGas {
    fn validate(&self) -> Result<(), CoreError> {
        let positive = [
            ("volume", self.volume),
            ("temperature", self.temperature),
            ("mass", self.mass),
            ("h", self.h),
            ("k", self.k),
            ("beta", self.beta),
        ];
        for (name, value) in positive {
            if !(value > 0.0 && value.is_finite()) {
                return Err(CoreError::Domain(alloc::format!(
                    "gas {name} must be positive and finite"
                )));
            }
        }
        if self.n == 0 {
            return Err(CoreError::Domain("gas must contain at least one molecule".to_string()));
        }
        Ok(())
    }
}

/// S = k ln( V^N (3 m k T)^(3N/2) / ((beta h)^(3N) N!) ), evaluated in the
/// log domain so astronomical configuration counts stay finite. `stirling`
/// selects the Stirling form of ln N!; without it N above 2^20 is refused
/// rather than silently approximated.
pub fn ideal_gas_entropy(gas: &IdealGas, stirling: bool) -> Result<f64, CoreError> {
    gas.validate()?;
    let n = gas.n as f64;
    let ln_nf = if stirling {
        let x = n;
        let two_pi = 2.0 * core::f64::consts::PI;
        x * x.ln() - x + 0.5 * (two_pi * x).ln() + 1.0 / (12.0 * x)
    } else if gas.n <= (1 << 20) {
        ln_factorial(gas.n)
    } else {
        return Err(CoreError::Domain(alloc::format!(
            "exact ln N! refused for N = {}; request the Stirling form",
            gas.n
        )));
    };
    let ln_momentum = 1.5 * n * (3.0 * gas.mass * gas.k * gas.temperature).ln();
    let ln_cells = 3.0 * n * (gas.beta * gas.h).ln();
    Ok(gas.k * (n * gas.volume.ln() + ln_momentum - ln_cells - ln_nf))
}

/// Entropy change of N molecules expanding from V_i to V_f at fixed T:
/// k N ln(V_f / V_i).
pub fn gas_entropy_change_volume(n: u64, k: f64, v_i: f64, v_f: f64) -> Result<f64, CoreError> {
    if !(v_i > 0.0 && v_f > 0.0) {
        return Err(CoreError::Domain("volumes must be positive".to_string()));
    }
    Ok(k * n as f64 * (v_f / v_i).ln())
}

/// Entropy change of N molecules heated from T_i to T_f at fixed V:
/// k N ln((T_f / T_i)^(3/2)).
pub fn gas_entropy_change_temperature(
    n: u64,
    k: f64,
    t_i: f64,
    t_f: f64,
) -> Result<f64, CoreError> {
    if !(t_i > 0.0 && t_f > 0.0) {
        return Err(CoreError::Domain("temperatures must be positive".to_string()));
    }
    Ok(k * n as f64 * 1.5 * (t_f / t_i).ln())
}

/// One member's entry in a per-tick entropy record.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberEntropy {
    pub id: u64,
    pub volume: u64,
    pub entropy: f64,
}

/// Snapshot of the registry's entropy state after one tick.
#[derive(Debug, Clone, PartialEq)]
pub struct EntropyRecord {
    pub time: f64,
    pub members: Vec<MemberEntropy>,
    pub system: f64,
    /// Entropy of a shadow copy evolved without collapse, when one is being
    /// tracked; reported as-is, no claims attached.
    pub reference: Option<f64>,
    pub post_collapse: bool,
    pub post_split: bool,
}

impl EntropyRecord {
    /// Measure the registry now, flagging the record with whatever the tick
    /// just produced.
    pub fn measure(
        registry: &WaveFunctionRegistry,
        f0: f64,
        k: f64,
        identical_correction: bool,
        reference: Option<f64>,
        new_events: &[CollapseEvent],
    ) -> Result<Self, CoreError> {
        let mut members = Vec::new();
        for (id, wf) in registry.iter() {
            let volume = wf.relative_volume(f0);
            let entropy = wavefunction_entropy(wf, f0, k).map_err(|e| e.for_wave_function(id))?;
            members.push(MemberEntropy { id, volume, entropy });
        }
        let system = system_entropy(registry, f0, k, identical_correction)?;
        let post_collapse = new_events.iter().any(|e| {
            matches!(e.mechanism, Mechanism::CcqmLocalize | Mechanism::GrwHit | Mechanism::Csl)
        });
        let post_split = new_events.iter().any(|e| e.mechanism == Mechanism::CcqmSplit);
        Ok(EntropyRecord {
            time: registry.time(),
            members,
            system,
            reference,
            post_collapse,
            post_split,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ccqm::CcqmParams;
    use crate::dynamics::{gaussian_packet, uniform_box_packet};
    use crate::lattice::{cell_sizes_from_debroglie, Boundary, LatticeSpec};
    use crate::registry::{RegistryConfig, WaveFunctionRegistry};
    use crate::rng::trajectory_rng;
    use crate::wavefunction::ParticleSpec;
    use crate::Units;

    fn particle(label: &str) -> ParticleSpec {
        ParticleSpec::new(1.0, label, None).unwrap()
    }

    fn box_state(cells: usize, width: usize, label: &str) -> DiscreteWaveFunction {
        let lat = LatticeSpec::uniform(1, 1, cells, 1.0, 0.0).unwrap();
        uniform_box_packet(&lat, &[particle(label)], &[0], &[width], &[0.0]).unwrap()
    }

    #[test]
    fn single_cell_state_has_zero_entropy() {
        let wf = box_state(16, 1, "p");
        assert_eq!(wavefunction_entropy(&wf, 0.0, 1.0).unwrap(), 0.0);
    }

    #[test]
    fn entropy_is_k_times_log_volume() {
        let wf = box_state(32, 20, "p");
        let s = wavefunction_entropy(&wf, 0.0, 1.0).unwrap();
        assert!((s - (20.0f64).ln()).abs() < 1e-15);
        let s2 = wavefunction_entropy(&wf, 0.0, 2.5).unwrap();
        assert!((s2 - 2.5 * (20.0f64).ln()).abs() < 1e-15);
    }

    #[test]
    fn vanished_state_is_an_error() {
        let wf = box_state(16, 4, "p");
        // threshold above the uniform magnitude empties the support count
        let err = wavefunction_entropy(&wf, 1.0, 1.0);
        assert!(matches!(err, Err(CoreError::VanishedWaveFunction)));
    }

    #[test]
    fn product_state_entropy_is_additive() {
        let a = box_state(32, 7, "a");
        let b = box_state(32, 11, "b");
        let joint = a.tensor_product(&b).unwrap();
        let s_joint = wavefunction_entropy(&joint, 0.0, 1.0).unwrap();
        let s_a = wavefunction_entropy(&a, 0.0, 1.0).unwrap();
        let s_b = wavefunction_entropy(&b, 0.0, 1.0).unwrap();
        assert!((s_joint - (s_a + s_b)).abs() < 1e-12, "{s_joint} vs {}", s_a + s_b);
    }

    #[test]
    fn system_entropy_sums_members_and_corrects_identical_classes() {
        let mut reg = WaveFunctionRegistry::new(RegistryConfig::default());
        assert_eq!(system_entropy(&reg, 0.0, 1.0, true).unwrap(), 0.0);

        let lat = LatticeSpec::uniform(1, 1, 32, 1.0, 0.0).unwrap();
        for i in 0..3 {
            let spec = ParticleSpec::new(1.0, &alloc::format!("m{i}"), Some("mol")).unwrap();
            let wf =
                uniform_box_packet(&lat, &[spec], &[i * 10], &[i * 10 + 10], &[0.0]).unwrap();
            reg.add_wave_function(wf).unwrap();
        }
        let plain = system_entropy(&reg, 0.0, 1.0, false).unwrap();
        assert!((plain - 3.0 * (10.0f64).ln()).abs() < 1e-12);
        let corrected = system_entropy(&reg, 0.0, 1.0, true).unwrap();
        assert!((corrected - (3.0 * (10.0f64).ln() - (6.0f64).ln())).abs() < 1e-12);
    }

    #[test]
    fn log_factorial_is_exact_small_and_smooth_at_the_switch() {
        assert_eq!(ln_factorial(0), 0.0);
        assert_eq!(ln_factorial(1), 0.0);
        assert!((ln_factorial(5) - (120.0f64).ln()).abs() < 1e-12);
        assert!((ln_factorial(10) - (3628800.0f64).ln()).abs() < 1e-11);
        // continuity across the exact/Stirling boundary
        let below = ln_factorial(1 << 20);
        let above = ln_factorial((1 << 20) + 1);
        let expected_step = (((1u64 << 20) + 1) as f64).ln();
        assert!(((above - below) - expected_step).abs() < 1e-6 * expected_step);
    }

    #[test]
    fn gas_entropy_matches_the_single_molecule_formula() {
        let gas = IdealGas {
            n: 1,
            volume: 3.0,
            temperature: 2.0,
            mass: 1.5,
            h: 2.0 * core::f64::consts::PI,
            k: 1.0,
            beta: 1.0,
        };
        let s = ideal_gas_entropy(&gas, false).unwrap();
        let expect = (3.0 * (3.0f64 * 1.5 * 2.0).powf(1.5) / gas.h.powi(3)).ln();
        assert!((s - expect).abs() < 1e-12, "{s} vs {expect}");
    }

    #[test]
    fn stirling_form_tracks_the_exact_sum() {
        let gas = IdealGas {
            n: 100_000,
            volume: 1.0,
            temperature: 1.0,
            mass: 1.0,
            h: 1.0,
            k: 1.0,
            beta: 1.0,
        };
        let exact = ideal_gas_entropy(&gas, false).unwrap();
        let stirling = ideal_gas_entropy(&gas, true).unwrap();
        assert!(
            (exact - stirling).abs() < 1e-9 * exact.abs().max(1.0),
            "{exact} vs {stirling}"
        );
        let huge = IdealGas { n: u64::MAX / 2, ..gas };
        assert!(ideal_gas_entropy(&huge, false).is_err());
        assert!(ideal_gas_entropy(&huge, true).unwrap().is_finite());
    }

    #[test]
    fn delta_formulas_reproduce_the_textbook_values() {
        let dv = gas_entropy_change_volume(100, 1.0, 1.0, 2.0).unwrap();
        assert!((dv - 100.0 * (2.0f64).ln()).abs() < 1e-12);
        assert!((dv - 69.3147).abs() < 1e-3);
        let dt = gas_entropy_change_temperature(10, 1.0, 1.0, 4.0).unwrap();
        assert!((dt - 10.0 * (8.0f64).ln()).abs() < 1e-12);
        assert!((dt - 20.794).abs() < 1e-2);
        assert!(gas_entropy_change_volume(1, 1.0, 0.0, 1.0).is_err());
    }

    #[test]
    fn cell_count_agrees_with_phase_space_volume() {
        // on cells a = beta h / p sized to the packet's momentum scale, the
        // support count approximates V_s * p / (beta h) = V_s / a, with V_s
        // the analytic threshold support of the Gaussian envelope
        let units = Units::default();
        let f0 = 1e-3;
        for (sigma_cells, p_scale) in [(3.0, 2.0), (5.0, 2.0), (4.0, 5.0)] {
            let a = cell_sizes_from_debroglie(&[p_scale], 1.0, units.planck()).unwrap()[0];
            let sigma = sigma_cells * a;
            let cells = 64usize.max((sigma_cells as usize) * 16);
            let lat = LatticeSpec::uniform(1, 1, cells, a, 0.0).unwrap();
            let wf = gaussian_packet(
                &lat,
                &[particle("p")],
                &[0.5 * cells as f64 * a],
                &[p_scale],
                &[sigma],
                Boundary::Periodic,
            )
            .unwrap();
            let v = wf.relative_volume(f0) as f64;
            let peak = wf.max_magnitude();
            let support = 4.0 * sigma * (peak / f0).ln().sqrt();
            let predicted = support * p_scale / (1.0 * units.planck());
            let ratio = v / predicted;
            assert!(
                ratio > 0.5 && ratio < 2.0,
                "sigma {sigma_cells} cells, p {p_scale}: v = {v}, predicted {predicted}"
            );
        }
    }

    #[test]
    fn record_snapshots_the_registry_and_flags_events() {
        let mut reg = WaveFunctionRegistry::new(RegistryConfig::default());
        let lat = LatticeSpec::uniform(1, 1, 128, 1.0, 0.0).unwrap();
        let wf = gaussian_packet(
            &lat,
            &[particle("p")],
            &[64.0],
            &[0.0],
            &[3.0],
            Boundary::Periodic,
        )
        .unwrap();
        let id = reg.add_wave_function(wf).unwrap();
        let params =
            CcqmParams { v_c: 48, target_fraction: 0.5, f0: 1e-3, ..CcqmParams::default() };
        let mut rng = trajectory_rng(0xe47, 0);
        let mut saw_drop = false;
        let mut prev: Option<f64> = None;
        for _ in 0..200 {
            let events = reg.tick(&params, 0.5, &mut rng).unwrap();
            let record =
                EntropyRecord::measure(&reg, params.f0, 1.0, false, None, &events).unwrap();
            assert_eq!(record.members.len(), 1);
            assert_eq!(record.members[0].id, id);
            assert!((record.system - record.members[0].entropy).abs() < 1e-15);
            if let Some(p) = prev {
                if record.post_collapse {
                    assert!(record.system < p, "collapse must drop the entropy");
                    saw_drop = true;
                } else {
                    // spreading packets gain entropy between collapses
                    assert!(record.system + 1e-9 >= p - 0.05, "{} -> {}", p, record.system);
                }
            }
            prev = Some(record.system);
        }
        assert!(saw_drop, "expected at least one collapse in 200 ticks");
    }
}
