//! Built-in models: the feedback-cooled qubit, the three-level maser and a
//! single Poisson channel, with their closed-form stationary quantities.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::fcs::CountingWeights;
use crate::feedback::{validate, FeedbackModel, ModelDescription};
use crate::ops::Operator;

/// Emission (`|e> -> |g>`) then absorption; basis `|g> = 0`, `|e> = 1`.
pub const QUBIT_LABELS: [&str; 2] = ["-1", "+1"];
pub const QUBIT_EMISSION: usize = 0;
pub const QUBIT_ABSORPTION: usize = 1;

/// Emission and injection for the left and right baths.
pub const MASER_LABELS: [&str; 4] = ["E_l", "I_l", "E_r", "I_r"];
pub const MASER_E_L: usize = 0;
pub const MASER_I_L: usize = 1;
pub const MASER_E_R: usize = 2;
pub const MASER_I_R: usize = 3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct QubitParams {
    pub nbar: f64,
    pub gamma: f64,
    pub lam: f64,
    #[serde(default)]
    pub delta: f64,
}

/// How the drive depends on the last jump.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum QubitProtocol {
    /// Drive on after an absorption, off after an emission.
    #[default]
    Feedback,
    AlwaysOn,
    DriveOff,
}

impl QubitParams {
    fn check(&self) -> Result<()> {
        if !(self.nbar >= 0.0 && self.nbar.is_finite()) {
            return Err(Error::Validation(format!(
                "nbar must be nonnegative, got {}",
                self.nbar
            )));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Validation(format!("gamma must be positive, got {}", self.gamma)));
        }
        if !(self.lam.is_finite() && self.delta.is_finite()) {
            return Err(Error::Validation("drive parameters must be finite".into()));
        }
        Ok(())
    }
}

fn labels(names: &[&str]) -> Vec<String> {
    names.iter().map(|s| s.to_string()).collect()
}

/// Qubit in a thermal bath whose drive is switched by the last jump.
pub fn qubit_cooling_model(p: &QubitParams) -> Result<FeedbackModel> {
    qubit_model(p, QubitProtocol::Feedback)
}

pub fn qubit_model(p: &QubitParams, protocol: QubitProtocol) -> Result<FeedbackModel> {
    p.check()?;
    let h_off = Operator::pauli_z().scale(-p.delta / 2.0);
    let h_on = &h_off + &Operator::pauli_x().scale(p.lam);
    let hamiltonians = match protocol {
        QubitProtocol::Feedback => vec![h_off, h_on],
        QubitProtocol::AlwaysOn => vec![h_on.clone(), h_on],
        QubitProtocol::DriveOff => vec![h_off.clone(), h_off],
    };
    let jumps = vec![
        Operator::ket_bra(0, 1, 2).scale((p.gamma * (p.nbar + 1.0)).sqrt()),
        Operator::ket_bra(1, 0, 2).scale((p.gamma * p.nbar).sqrt()),
    ];
    validate(ModelDescription {
        dim: 2,
        labels: labels(&QUBIT_LABELS),
        hamiltonians,
        jump_ops: vec![jumps.clone(), jumps],
        unmonitored: Vec::new(),
        hamiltonian_only: Some(true),
    })
}

/// Stationary ground population, coherence `<g|rho|e>` and probability
/// that the last jump was an emission, on resonance.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct QubitAnalytic {
    pub ground_population: f64,
    pub coherence: Complex64,
    pub emission_memory: f64,
}

/// Closed forms for the feedback qubit at zero detuning, `p = gamma / lambda`.
pub fn qubit_analytic(nbar: f64, p: f64) -> QubitAnalytic {
    let n = nbar;
    let den = 4.0 + n * (12.0 + (1.0 + 2.0 * n).powi(2) * p * p);
    QubitAnalytic {
        ground_population: (1.0 + 2.0 * n) * (4.0 + n * (1.0 + n) * p * p) / den,
        coherence: Complex64::new(0.0, -2.0 * n * n * p / den),
        emission_memory: (1.0 + n) * (4.0 + n * (1.0 + 2.0 * n) * p * p) / den,
    }
}

/// Ground population of the undriven qubit in equilibrium.
pub fn thermal_ground_population(nbar: f64) -> f64 {
    (nbar + 1.0) / (2.0 * nbar + 1.0)
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MaserVariant {
    /// Coherent drive between levels 0 and 1.
    #[default]
    Quantum,
    /// Incoherent 0 <-> 1 transitions at the equivalent classical rate.
    Classical,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MaserParams {
    pub nl: f64,
    pub nr: f64,
    pub gl: f64,
    pub gr: f64,
    pub lam: f64,
    #[serde(default)]
    pub delta: f64,
    pub wl: f64,
    pub wr: f64,
    #[serde(default)]
    pub variant: MaserVariant,
    /// Drive on only after an emission into the right bath.
    pub feedback: bool,
}

impl MaserParams {
    /// Equal couplings `gamma`, drive `lambda`, zero detuning.
    pub fn symmetric(nl: f64, nr: f64, gamma: f64, lam: f64, wl: f64, wr: f64, feedback: bool) -> Self {
        Self {
            nl,
            nr,
            gl: gamma,
            gr: gamma,
            lam,
            delta: 0.0,
            wl,
            wr,
            variant: MaserVariant::Quantum,
            feedback,
        }
    }

    fn check(&self) -> Result<()> {
        if !(self.nl >= 0.0 && self.nr >= 0.0 && self.nl.is_finite() && self.nr.is_finite()) {
            return Err(Error::Validation("bath occupations must be nonnegative".into()));
        }
        if !(self.gl > 0.0 && self.gr > 0.0 && self.gl.is_finite() && self.gr.is_finite()) {
            return Err(Error::Validation("bath couplings must be positive".into()));
        }
        if !(self.wl > self.wr && self.wr > 0.0 && self.wl.is_finite()) {
            return Err(Error::Validation(format!(
                "transition energies must satisfy wl > wr > 0, got wl = {}, wr = {}",
                self.wl, self.wr
            )));
        }
        if !(self.lam.is_finite() && self.delta.is_finite()) {
            return Err(Error::Validation("drive parameters must be finite".into()));
        }
        Ok(())
    }

    /// Dephasing rate of the 0-1 coherence, `(gl nl + gr nr) / 2`.
    pub fn decoherence_rate(&self) -> f64 {
        0.5 * (self.gl * self.nl + self.gr * self.nr)
    }

    /// Incoherent transition rate `2 lambda^2 G / (delta^2 + G^2)`.
    pub fn classical_rate(&self) -> Result<f64> {
        let g = self.decoherence_rate();
        let den = self.delta * self.delta + g * g;
        if den == 0.0 {
            return Err(Error::Validation(
                "classical rate is undefined without dephasing or detuning".into(),
            ));
        }
        Ok(2.0 * self.lam * self.lam * g / den)
    }
}

/// Bath jump operators in the order of [`MASER_LABELS`]; levels 0, 1, 2.
pub fn maser_jumps(p: &MaserParams) -> Vec<Operator> {
    vec![
        Operator::ket_bra(0, 2, 3).scale((p.gl * (p.nl + 1.0)).sqrt()),
        Operator::ket_bra(2, 0, 3).scale((p.gl * p.nl).sqrt()),
        Operator::ket_bra(1, 2, 3).scale((p.gr * (p.nr + 1.0)).sqrt()),
        Operator::ket_bra(2, 1, 3).scale((p.gr * p.nr).sqrt()),
    ]
}

pub fn maser_model(p: &MaserParams) -> Result<FeedbackModel> {
    p.check()?;
    let jumps = maser_jumps(p);
    let detuning = Operator::from_diagonal(&[p.delta / 2.0, -p.delta / 2.0, 0.0]);
    let drive_active = |k: usize| !p.feedback || k == MASER_E_R;
    let (hamiltonians, unmonitored) = match p.variant {
        MaserVariant::Quantum => {
            let drive = (Operator::ket_bra(0, 1, 3) + Operator::ket_bra(1, 0, 3)).scale(p.lam);
            let h_on = &detuning + &drive;
            let hs = (0..4)
                .map(|k| {
                    if drive_active(k) {
                        h_on.clone()
                    } else {
                        detuning.clone()
                    }
                })
                .collect();
            (hs, Vec::new())
        }
        MaserVariant::Classical => {
            let rate = p.classical_rate()?.sqrt();
            let pair = vec![
                Operator::ket_bra(0, 1, 3).scale(rate),
                Operator::ket_bra(1, 0, 3).scale(rate),
            ];
            let silent = (0..4)
                .map(|k| if drive_active(k) { pair.clone() } else { Vec::new() })
                .collect();
            (vec![Operator::zeros(3); 4], silent)
        }
    };
    validate(ModelDescription {
        dim: 3,
        labels: labels(&MASER_LABELS),
        hamiltonians,
        jump_ops: vec![jumps; 4],
        unmonitored,
        hamiltonian_only: Some(true),
    })
}

/// Work delivered to the drive: `wl` per left injection, `-wl` per left
/// emission, `-wr` per right emission, `wr` per right injection.
pub fn work_weights(p: &MaserParams) -> CountingWeights {
    CountingWeights::per_channel(&[-p.wl, p.wl, -p.wr, p.wr]).expect("finite energies")
}

/// Closed-form stationary populations and powers for equal couplings,
/// with `p = gamma / lambda`. The powers are in units of `gamma (wl - wr)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MaserAnalytic {
    /// Feedback populations of levels 0, 1, 2.
    pub populations: [f64; 3],
    pub power_no_feedback: f64,
    pub power_feedback: f64,
}

pub fn maser_analytic(nl: f64, nr: f64, p: f64) -> MaserAnalytic {
    let nb = nl + nr;
    let p2 = p * p;
    let xi = 4.0 * (nr + 4.0 * nr * nl + nl * (3.0 + 2.0 * nl)) + nl * (nr + nl) * (nr + nl + 3.0 * nr * nl) * p2;
    let eta = 4.0 * (nr + 2.0 * nr * nl + nl * (2.0 + nl));
    let phi = (nr + nl) * (nr + nl + 3.0 * nr * nl);
    MaserAnalytic {
        populations: [
            (eta + nr * nl * (1.0 + nl) * nb * p2) / xi,
            (1.0 + nr) * nl * (4.0 + nl * nb * p2) / xi,
            nl * nb * (4.0 + nr * nl * p2) / xi,
        ],
        power_no_feedback: 4.0 * (nl - nr) / (4.0 * (4.0 + 3.0 * nr + 3.0 * nl) + phi * p2),
        power_feedback: 4.0 * (1.0 + nr) * nl * nl
            / (4.0 * (nr + 4.0 * nr * nl + nl * (3.0 + 2.0 * nl)) + nl * phi * p2),
    }
}

/// One-dimensional system with a single jump channel of the given rate.
pub fn poisson_model(rate: f64) -> Result<FeedbackModel> {
    if !(rate >= 0.0 && rate.is_finite()) {
        return Err(Error::Validation(format!("rate must be nonnegative, got {rate}")));
    }
    validate(ModelDescription {
        dim: 1,
        labels: vec!["jump".into()],
        hamiltonians: vec![Operator::zeros(1)],
        jump_ops: vec![vec![Operator::identity(1).scale(rate.sqrt())]],
        unmonitored: Vec::new(),
        hamiltonian_only: Some(true),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hybrid::{extended_hamiltonian, extended_liouvillian, marginals};

    #[test]
    fn qubit_closed_form_spot_values() {
        let a = qubit_analytic(0.5, 0.25);
        assert!((a.ground_population - 0.799_382_716_049_382_7).abs() < 1e-15);
        assert!((a.coherence.im + 0.012_345_679_012_345_68).abs() < 1e-15);
        assert!((a.emission_memory - 0.601_851_851_851_851_9).abs() < 1e-15);
        let zero = qubit_analytic(0.0, 0.7);
        assert_eq!(
            (zero.ground_population, zero.coherence.im, zero.emission_memory),
            (1.0, 0.0, 1.0)
        );
        let hot = qubit_analytic(1e7, 0.25);
        assert!((hot.ground_population - 0.5).abs() < 1e-6);
    }

    #[test]
    fn qubit_model_structure() {
        let model = qubit_cooling_model(&QubitParams {
            nbar: 0.5,
            gamma: 0.25,
            lam: 1.0,
            delta: 0.0,
        })
        .unwrap();
        assert!(model.hamiltonian_only());
        assert_eq!(model.channel_index("+1"), Some(QUBIT_ABSORPTION));
        let hh = extended_hamiltonian(&model);
        let expected = Operator::pauli_x().kron(&Operator::projector(1, 2));
        assert!(hh.max_abs_diff(&expected) < 1e-15);
        assert!(qubit_cooling_model(&QubitParams {
            nbar: -1.0,
            gamma: 1.0,
            lam: 1.0,
            delta: 0.0
        })
        .is_err());
    }

    #[test]
    fn undriven_qubit_is_thermal() {
        let model = qubit_cooling_model(&QubitParams {
            nbar: 0.8,
            gamma: 0.3,
            lam: 0.0,
            delta: 0.0,
        })
        .unwrap();
        let ss = extended_liouvillian(&model).unwrap().steady_state().unwrap();
        let pg = marginals(&ss).system.get(0, 0).re;
        assert!((pg - thermal_ground_population(0.8)).abs() < 1e-12);
    }

    #[test]
    fn qubit_steady_state_matches_closed_form() {
        let model = qubit_cooling_model(&QubitParams {
            nbar: 0.5,
            gamma: 0.25,
            lam: 1.0,
            delta: 0.0,
        })
        .unwrap();
        let ss = extended_liouvillian(&model).unwrap().steady_state().unwrap();
        let m = marginals(&ss);
        let a = qubit_analytic(0.5, 0.25);
        assert!((m.system.get(0, 0).re - a.ground_population).abs() < 1e-10);
        assert!((m.system.get(0, 1) - a.coherence).norm() < 1e-10);
        assert!((m.memory_dist[QUBIT_EMISSION] - a.emission_memory).abs() < 1e-10);
    }

    #[test]
    fn maser_closed_form_spot_values() {
        let a = maser_analytic(0.3, 8.0, 1e-9);
        let expected = [0.722_162_74, 0.144_539_61, 0.133_297_64];
        for (x, e) in a.populations.iter().zip(expected) {
            assert!((x - e).abs() < 1e-8);
        }
        assert!((a.power_feedback - 0.043_361_9).abs() < 1e-7);
        assert!((a.power_no_feedback + 0.266_436).abs() < 1e-6);
        assert_eq!(maser_analytic(1.0, 1.0, 0.3).power_no_feedback, 0.0);
        for &(nl, nr, p) in &[(0.1, 8.0, 0.05), (1.0, 0.3, 1.0), (8.0, 8.0, 0.25)] {
            let s: f64 = maser_analytic(nl, nr, p).populations.iter().sum();
            assert!((s - 1.0).abs() < 1e-14);
        }
    }

    #[test]
    fn maser_model_structure() {
        let p = MaserParams::symmetric(0.3, 8.0, 0.025, 1.0, 8.0, 2.0, true);
        let model = maser_model(&p).unwrap();
        assert_eq!(model.n_channels(), 4);
        assert!(model.hamiltonian_only());
        let hh = extended_hamiltonian(&model);
        let drive = Operator::ket_bra(0, 1, 3) + Operator::ket_bra(1, 0, 3);
        assert!(hh.max_abs_diff(&drive.kron(&Operator::projector(MASER_E_R, 4))) < 1e-15);
        assert_eq!(crate::hybrid::extended_jumps(&model).len(), 16);

        let bad = MaserParams { wl: 1.0, wr: 2.0, ..p };
        assert!(maser_model(&bad).is_err());
    }

    #[test]
    fn classical_rate_value() {
        let p = MaserParams {
            variant: MaserVariant::Classical,
            ..MaserParams::symmetric(0.3, 8.0, 0.025, 1.0, 8.0, 2.0, true)
        };
        assert!((p.decoherence_rate() - 0.10375).abs() < 1e-15);
        assert!((p.classical_rate().unwrap() - 2.0 / 0.10375).abs() < 1e-12);
        let model = maser_model(&p).unwrap();
        assert_eq!(model.unmonitored(MASER_E_R).len(), 2);
        assert!(model.unmonitored(MASER_E_L).is_empty());
    }

    #[test]
    fn work_of_elementary_cycles() {
        let p = MaserParams::symmetric(0.3, 8.0, 0.025, 1.0, 8.0, 2.0, true);
        let w = work_weights(&p);
        let charge = |seq: &[usize]| -> f64 { seq.iter().map(|&k| w.weight(k, 0)).sum() };
        assert_eq!(charge(&[MASER_I_L, MASER_E_R]), 6.0);
        assert_eq!(charge(&[MASER_I_R, MASER_E_L]), -6.0);
        assert_eq!(charge(&[MASER_I_L, MASER_E_L]), 0.0);
    }

    #[test]
    fn poisson_model_rejects_negative_rate() {
        assert!(poisson_model(-1.0).is_err());
        assert_eq!(poisson_model(2.0).unwrap().n_channels(), 1);
    }
}
