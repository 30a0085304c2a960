//! Pauli and erasure channels and the classical channels they induce on
//! Z-basis and X-basis readout.

use serde::{Deserialize, Serialize};

use crate::Error;

const TOL: f64 = 1e-12;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PauliChannel {
    pub p_i: f64,
    pub p_x: f64,
    pub p_y: f64,
    pub p_z: f64,
}

impl PauliChannel {
    pub fn new(p_i: f64, p_x: f64, p_y: f64, p_z: f64) -> Result<Self, Error> {
        let c = Self { p_i, p_x, p_y, p_z };
        let ps = [p_i, p_x, p_y, p_z];
        if ps.iter().any(|&q| !(-TOL..=1.0 + TOL).contains(&q)) {
            return Err(Error::InvalidInput(format!("probability out of range in {c:?}")));
        }
        if (ps.iter().sum::<f64>() - 1.0).abs() > TOL {
            return Err(Error::InvalidInput(format!("probabilities of {c:?} do not sum to 1")));
        }
        Ok(c)
    }
}

pub fn depolarizing(p: f64) -> Result<PauliChannel, Error> {
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::InvalidInput(format!("p = {p} outside [0, 1]")));
    }
    PauliChannel::new(1.0 - p, p / 3.0, p / 3.0, p / 3.0)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BscChannel {
    pub crossover: f64,
}

impl BscChannel {
    pub fn new(crossover: f64) -> Result<Self, Error> {
        if !(0.0..=0.5 + TOL).contains(&crossover) {
            return Err(Error::InvalidInput(format!("crossover {crossover} outside [0, 0.5]")));
        }
        Ok(Self { crossover: crossover.min(0.5) })
    }
}

/// Weighted mixture of BSCs; the receiver knows which component was used.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BscMixture {
    pub components: Vec<(f64, f64)>,
}

impl BscMixture {
    pub fn new(components: Vec<(f64, f64)>) -> Result<Self, Error> {
        let total: f64 = components.iter().map(|c| c.0).sum();
        if (total - 1.0).abs() > TOL {
            return Err(Error::InvalidInput(format!("mixture weights sum to {total}")));
        }
        if components.iter().any(|&(w, q)| w < -TOL || !(-TOL..=1.0 + TOL).contains(&q)) {
            return Err(Error::InvalidInput("mixture component out of range".into()));
        }
        Ok(Self { components })
    }

    pub fn single(crossover: f64) -> Self {
        Self { components: vec![(1.0, crossover)] }
    }

    /// Marginal crossover probability.
    pub fn crossover(&self) -> f64 {
        self.components.iter().map(|&(w, q)| w * q).sum()
    }
}

impl From<BscChannel> for BscMixture {
    fn from(c: BscChannel) -> Self {
        Self::single(c.crossover)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ErasureChannel {
    pub epsilon: f64,
}

impl ErasureChannel {
    pub fn new(epsilon: f64) -> Result<Self, Error> {
        if !(0.0..=1.0).contains(&epsilon) {
            return Err(Error::InvalidInput(format!("erasure probability {epsilon} outside [0, 1]")));
        }
        Ok(Self { epsilon })
    }
}

/// Z-basis readout flips under X and Y.
pub fn induced_z_channel(c: &PauliChannel) -> BscChannel {
    BscChannel { crossover: c.p_x + c.p_y }
}

/// X-basis readout flips under Z and Y.
pub fn induced_x_channel(c: &PauliChannel) -> BscChannel {
    BscChannel { crossover: c.p_z + c.p_y }
}

/// X-basis channel conditioned on whether the Z-basis side saw an X-type flip.
pub fn extended_x_channel(c: &PauliChannel) -> BscMixture {
    let mut components = Vec::with_capacity(2);
    let w0 = c.p_i + c.p_z;
    let w1 = c.p_x + c.p_y;
    if w0 > 0.0 {
        components.push((w0, c.p_z / w0));
    }
    if w1 > 0.0 {
        components.push((w1, c.p_y / w1));
    }
    BscMixture { components }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn close(a: f64, b: f64) -> bool {
        (a - b).abs() < 1e-15
    }

    #[test]
    fn depolarizing_components() {
        let c = depolarizing(0.0).unwrap();
        assert_eq!((c.p_i, c.p_x, c.p_y, c.p_z), (1.0, 0.0, 0.0, 0.0));
        let c = depolarizing(0.001).unwrap();
        assert!(close(c.p_i, 0.999) && close(c.p_x, 1.0 / 3000.0) && close(c.p_z, 1.0 / 3000.0));
        let c = depolarizing(0.15).unwrap();
        assert!((c.p_i + c.p_x + c.p_y + c.p_z - 1.0).abs() < 1e-12);
        assert!(depolarizing(1.5).is_err());
        assert!(depolarizing(-0.1).is_err());
    }

    #[test]
    fn induced_channels() {
        for p in [0.0, 1e-3, 0.1, 0.3] {
            let c = depolarizing(p).unwrap();
            assert!((induced_z_channel(&c).crossover - 2.0 * p / 3.0).abs() < 1e-15);
            assert!((induced_x_channel(&c).crossover - 2.0 * p / 3.0).abs() < 1e-15);
        }
        let id = PauliChannel::new(1.0, 0.0, 0.0, 0.0).unwrap();
        assert_eq!(induced_z_channel(&id).crossover, 0.0);
        assert_eq!(induced_x_channel(&id).crossover, 0.0);
        let c = PauliChannel::new(0.7, 0.1, 0.05, 0.15).unwrap();
        assert!((induced_z_channel(&c).crossover - 0.15).abs() < 1e-15);
        assert!((induced_x_channel(&c).crossover - 0.20).abs() < 1e-15);
    }

    #[test]
    fn extended_channel_depolarizing() {
        let p = 0.3;
        let m = extended_x_channel(&depolarizing(p).unwrap());
        assert_eq!(m.components.len(), 2);
        let (w0, q0) = m.components[0];
        let (w1, q1) = m.components[1];
        assert!((w0 - (1.0 - 2.0 * p / 3.0)).abs() < 1e-15);
        assert!((w1 - 2.0 * p / 3.0).abs() < 1e-15);
        assert!((q0 - (p / 3.0) / (1.0 - 2.0 * p / 3.0)).abs() < 1e-15);
        assert!((q1 - 0.5).abs() < 1e-15);
    }

    #[test]
    fn extended_channel_degenerate_and_marginal() {
        let m = extended_x_channel(&PauliChannel::new(1.0, 0.0, 0.0, 0.0).unwrap());
        assert_eq!(m.components, vec![(1.0, 0.0)]);
        let c = PauliChannel::new(0.7, 0.1, 0.05, 0.15).unwrap();
        let m = extended_x_channel(&c);
        assert!((m.components.iter().map(|c| c.0).sum::<f64>() - 1.0).abs() < 1e-12);
        assert!((m.crossover() - induced_x_channel(&c).crossover).abs() < 1e-12);
    }

    #[test]
    fn validation() {
        assert!(PauliChannel::new(0.5, 0.5, 0.5, 0.0).is_err());
        assert!(BscChannel::new(0.6).is_err());
        assert!(BscMixture::new(vec![(0.5, 0.1), (0.4, 0.2)]).is_err());
        assert!(ErasureChannel::new(1.1).is_err());
    }
}
