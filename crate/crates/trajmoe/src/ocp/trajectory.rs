use crate::{DVec, Error};

/// Discrete-time trajectory on a uniform grid: `N+1` states, `N` controls,
/// and the free final time that sets the step `h = t_f / N`.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub t_f: f64,
    pub states: Vec<DVec>,
    pub controls: Vec<DVec>,
}

impl Trajectory {
    pub fn n_nodes(&self) -> usize {
        self.controls.len()
    }

    pub fn step(&self) -> f64 {
        self.t_f / self.controls.len() as f64
    }

    /// Length of the flat encoding for given dimensions.
    pub fn packed_len(n: usize, m: usize, nodes: usize) -> usize {
        1 + n * (nodes + 1) + m * nodes
    }

    /// Flatten to `[t_f, x_0..x_N, u_0..u_{N-1}]`. This is the decision
    /// vector layout of the transcribed problem and the regression target
    /// layout of the learned models, so the two stay bit-compatible.
    pub fn pack(&self) -> DVec {
        let n = self.states[0].len();
        let m = if self.controls.is_empty() {
            0
        } else {
            self.controls[0].len()
        };
        let mut z = DVec::zeros(Self::packed_len(n, m, self.controls.len()));
        z[0] = self.t_f;
        let mut at = 1;
        for x in &self.states {
            z.rows_mut(at, n).copy_from(x);
            at += n;
        }
        for u in &self.controls {
            z.rows_mut(at, m).copy_from(u);
            at += m;
        }
        z
    }

    /// Inverse of [`Trajectory::pack`]; exact on every finite bit pattern.
    pub fn unpack(n: usize, m: usize, z: &DVec) -> Result<Trajectory, Error> {
        if z.len() <= 1 + n || !(z.len() - 1 - n).is_multiple_of(n + m) {
            return Err(Error::invalid(format!(
                "packed length {} does not fit state dim {n} + control dim {m}",
                z.len()
            )));
        }
        let nodes = (z.len() - 1 - n) / (n + m);
        let mut states = Vec::with_capacity(nodes + 1);
        let mut controls = Vec::with_capacity(nodes);
        let mut at = 1;
        for _ in 0..=nodes {
            states.push(DVec::from(z.rows(at, n)));
            at += n;
        }
        for _ in 0..nodes {
            controls.push(DVec::from(z.rows(at, m)));
            at += m;
        }
        Ok(Trajectory {
            t_f: z[0],
            states,
            controls,
        })
    }
}
