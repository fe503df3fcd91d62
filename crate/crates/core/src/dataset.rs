//! Observed trajectories used as training and test data.

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::integrate::{refine_grid, DenseTrajectory};
use crate::system::{simulate, DynamicalSystem, InputSignal};

/// One observed output history `y_l = y(t_l)` from a known initial state.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub label: String,
    pub x0: DVector<f64>,
    pub times: Vec<f64>,
    pub observations: Vec<DVector<f64>>,
    pub input: InputSignal,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    /// Average output energy `L^{-1} sum_l |y_l|^2`.
    pub fn energy(&self) -> f64 {
        self.observations.iter().map(|y| y.norm_squared()).sum::<f64>() / self.len() as f64
    }

    fn validate(&self, n: usize, m: usize) -> Result<()> {
        let err = |msg: String| Err(Error::InvalidData(format!("trajectory '{}': {msg}", self.label)));
        if self.x0.len() != n {
            return err(format!("x0 has length {}, expected {n}", self.x0.len()));
        }
        if self.times.is_empty() {
            return err("no samples".into());
        }
        if self.times.len() != self.observations.len() {
            return err(format!(
                "{} times but {} observations",
                self.times.len(),
                self.observations.len()
            ));
        }
        if self.times.windows(2).any(|w| !(w[1] > w[0])) {
            return err("sample times must be strictly increasing".into());
        }
        if let Some(y) = self.observations.iter().find(|y| y.len() != m) {
            return err(format!("observation has length {}, expected {m}", y.len()));
        }
        if self.observations.iter().flat_map(|y| y.iter()).any(|v| !v.is_finite())
            || self.x0.iter().any(|v| !v.is_finite())
        {
            return err("non-finite values".into());
        }
        Ok(())
    }
}

/// A validated collection of trajectories sharing state and output
/// dimensions.
#[derive(Debug, Clone, PartialEq)]
pub struct TrajectoryDataset {
    n: usize,
    m: usize,
    trajectories: Vec<Trajectory>,
}

impl TrajectoryDataset {
    pub fn new(n: usize, m: usize, trajectories: Vec<Trajectory>) -> Result<Self> {
        if trajectories.is_empty() {
            return Err(Error::InvalidData("dataset has no trajectories".into()));
        }
        for t in &trajectories {
            t.validate(n, m)?;
        }
        Ok(Self { n, m, trajectories })
    }

    pub fn state_dim(&self) -> usize {
        self.n
    }

    pub fn output_dim(&self) -> usize {
        self.m
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn len(&self) -> usize {
        self.trajectories.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    /// Dataset with only the `i`-th trajectory.
    pub fn subset(&self, i: usize) -> Self {
        Self { n: self.n, m: self.m, trajectories: vec![self.trajectories[i].clone()] }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: DatasetFile =
            serde_json::from_str(text).map_err(|e| Error::InvalidData(format!("dataset JSON: {e}")))?;
        file.try_into()
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(&DatasetFile::from(self)).expect("dataset serializes")
    }
}

/// Simulates the full-order model from `x0` and samples the output at
/// `times`, using `steps_per_interval` RK4 steps between samples.
pub fn sample_full_order(
    sys: &dyn DynamicalSystem,
    label: impl Into<String>,
    x0: DVector<f64>,
    input: InputSignal,
    times: &[f64],
    steps_per_interval: usize,
) -> Result<Trajectory> {
    let nodes = refine_grid(times, steps_per_interval);
    let traj = simulate(sys, &x0, &input, &nodes)?;
    let stride = steps_per_interval.max(1);
    let observations = (0..times.len()).map(|l| sys.observe(&traj.states()[l * stride])).collect();
    Ok(Trajectory { label: label.into(), x0, times: times.to_vec(), observations, input })
}

/// `count` equally spaced times on `[0, horizon]`.
pub fn uniform_times(count: usize, horizon: f64) -> Vec<f64> {
    match count {
        0 => Vec::new(),
        1 => vec![0.0],
        _ => (0..count).map(|l| horizon * l as f64 / (count - 1) as f64).collect(),
    }
}

/// Continuous-time output signal `y(t)` over `[t0, tf]`, the data for the
/// integrated objective.
#[derive(Debug, Clone)]
pub struct SignalTrajectory {
    pub label: String,
    pub x0: DVector<f64>,
    pub input: InputSignal,
    /// Breakpoints at which the forward and adjoint solves are refined.
    pub grid: Vec<f64>,
    pub signal: DenseTrajectory,
}

impl SignalTrajectory {
    /// Cubic interpolation of sampled observations.
    pub fn from_samples(traj: &Trajectory) -> Result<Self> {
        let signal = DenseTrajectory::from_samples(traj.times.clone(), traj.observations.clone())?;
        Ok(Self {
            label: traj.label.clone(),
            x0: traj.x0.clone(),
            input: traj.input,
            grid: traj.times.clone(),
            signal,
        })
    }

    /// Output signal of the full-order model, dense to integrator accuracy.
    pub fn from_full_order(
        sys: &dyn DynamicalSystem,
        label: impl Into<String>,
        x0: DVector<f64>,
        input: InputSignal,
        grid: &[f64],
        steps_per_interval: usize,
    ) -> Result<Self> {
        let nodes = refine_grid(grid, steps_per_interval);
        let traj = simulate(sys, &x0, &input, &nodes)?;
        let m = sys.output_dim();
        let mut ys = Vec::with_capacity(nodes.len());
        let mut dys = Vec::with_capacity(nodes.len());
        for (x, dx) in traj.states().iter().zip(traj.derivatives()) {
            ys.push(sys.observe(x));
            // dy/dt = (dg/dx) dx/dt, assembled from the transpose action
            let dy = DVector::from_fn(m, |i, _| {
                let mut e = DVector::zeros(m);
                e[i] = 1.0;
                sys.observe_jtvp(x, &e).dot(dx)
            });
            dys.push(dy);
        }
        let signal = DenseTrajectory::new(nodes, ys, dys)?;
        Ok(Self { label: label.into(), x0, input, grid: grid.to_vec(), signal })
    }

    pub fn start(&self) -> f64 {
        self.grid[0]
    }

    pub fn end(&self) -> f64 {
        *self.grid.last().unwrap()
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct DatasetFile {
    n: usize,
    m: usize,
    trajectories: Vec<TrajectoryFile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct TrajectoryFile {
    label: String,
    x0: Vec<f64>,
    times: Vec<f64>,
    observations: Vec<Vec<f64>>,
    #[serde(default, skip_serializing_if = "InputSignal::is_zero")]
    input: InputSignal,
}

impl TryFrom<DatasetFile> for TrajectoryDataset {
    type Error = Error;

    fn try_from(file: DatasetFile) -> Result<Self> {
        let trajectories = file
            .trajectories
            .into_iter()
            .map(|t| Trajectory {
                label: t.label,
                x0: DVector::from_vec(t.x0),
                times: t.times,
                observations: t.observations.into_iter().map(DVector::from_vec).collect(),
                input: t.input,
            })
            .collect();
        TrajectoryDataset::new(file.n, file.m, trajectories)
    }
}

impl From<&TrajectoryDataset> for DatasetFile {
    fn from(ds: &TrajectoryDataset) -> Self {
        DatasetFile {
            n: ds.n,
            m: ds.m,
            trajectories: ds
                .trajectories
                .iter()
                .map(|t| TrajectoryFile {
                    label: t.label.clone(),
                    x0: t.x0.iter().copied().collect(),
                    times: t.times.clone(),
                    observations: t.observations.iter().map(|y| y.iter().copied().collect()).collect(),
                    input: t.input,
                })
                .collect(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::system::{impulse_state, toy_model};

    #[test]
    fn json_round_trip_and_validation() {
        let json = r#"{"n":2,"m":1,"trajectories":[
            {"label":"a","x0":[1,0],"times":[0,1,2],"observations":[[1],[0.5],[0.25]]}]}"#;
        let ds = TrajectoryDataset::from_json(json).unwrap();
        assert_eq!(ds.len(), 1);
        let t = &ds.trajectories()[0];
        assert!((t.energy() - (1.0 + 0.25 + 0.0625) / 3.0).abs() < 1e-15);
        assert_eq!(TrajectoryDataset::from_json(&ds.to_json()).unwrap(), ds);

        let bad_times = json.replace("[0,1,2]", "[0,2,1]");
        assert!(TrajectoryDataset::from_json(&bad_times).is_err());
        let bad_dim = json.replace("[1,0]", "[1,0,0]");
        assert!(TrajectoryDataset::from_json(&bad_dim).is_err());
    }

    #[test]
    fn toy_samples_start_at_three_u0() {
        let sys = toy_model();
        let times = uniform_times(11, 10.0);
        assert_eq!(times[10], 10.0);
        let traj = sample_full_order(&sys, "u0=0.5", impulse_state(&sys, 0.5), InputSignal::Zero, &times, 50).unwrap();
        assert_eq!(traj.observations.len(), 11);
        assert_eq!(traj.observations[0][0], 1.5);
    }

    #[test]
    fn full_order_signal_matches_samples() {
        let sys = toy_model();
        let grid = uniform_times(11, 10.0);
        let sig = SignalTrajectory::from_full_order(&sys, "s", impulse_state(&sys, 1.0), InputSignal::Zero, &grid, 50).unwrap();
        let fine = sample_full_order(&sys, "f", impulse_state(&sys, 1.0), InputSignal::Zero, &uniform_times(21, 10.0), 25).unwrap();
        for (t, y) in fine.times.iter().zip(&fine.observations) {
            assert!((sig.signal.eval(*t)[0] - y[0]).abs() < 1e-10 * (1.0 + y[0].abs()));
        }
    }
}
