use std::io::{Read, Write};

use crate::error::{Error, Result};

/// Adam moments for one parameter group.
#[derive(Clone, Debug, PartialEq)]
pub struct Moments {
    pub m: Vec<f64>,
    pub v: Vec<f64>,
    pub step: u64,
}

impl Moments {
    pub fn zeros(len: usize) -> Self {
        Moments {
            m: vec![0.0; len],
            v: vec![0.0; len],
            step: 0,
        }
    }

    pub fn len(&self) -> usize {
        self.m.len()
    }

    pub fn is_empty(&self) -> bool {
        self.m.is_empty()
    }

    fn is_finite(&self) -> bool {
        self.m.iter().chain(&self.v).all(|x| x.is_finite())
    }
}

#[derive(Clone, Copy, Debug)]
pub(crate) struct AdamStep {
    lr: f64,
    beta1: f64,
    beta2: f64,
    eps: f64,
    bias1: f64,
    bias2: f64,
}

impl AdamStep {
    /// Advances `moments.step` and returns the update rule for that step.
    pub(crate) fn begin(moments: &mut Moments, lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        moments.step += 1;
        let t = moments.step as i32;
        AdamStep {
            lr,
            beta1,
            beta2,
            eps,
            bias1: 1.0 - beta1.powi(t),
            bias2: 1.0 - beta2.powi(t),
        }
    }

    /// Records gradient `g` for entry `i` and returns the parameter increment.
    #[inline]
    pub(crate) fn delta(&self, moments: &mut Moments, i: usize, g: f64) -> f64 {
        let m = &mut moments.m[i];
        let v = &mut moments.v[i];
        *m = self.beta1 * *m + (1.0 - self.beta1) * g;
        *v = self.beta2 * *v + (1.0 - self.beta2) * g * g;
        let m_hat = *m / self.bias1;
        let v_hat = *v / self.bias2;
        -self.lr * m_hat / (v_hat.sqrt() + self.eps)
    }
}

/// Optimizer state: one moment group per Gaussian parameter class and one per
/// observation for its two endpoint twists (start then end, 12 entries).
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub position: Moments,
    pub log_scale: Moments,
    pub rotation: Moments,
    pub opacity: Moments,
    pub sh: Moments,
    pub poses: Vec<Moments>,
}

const MAGIC: &[u8; 4] = b"ADM1";

impl AdamState {
    pub fn new(gaussians: usize, sh_coeffs: usize, observations: usize) -> Self {
        AdamState {
            position: Moments::zeros(3 * gaussians),
            log_scale: Moments::zeros(3 * gaussians),
            rotation: Moments::zeros(4 * gaussians),
            opacity: Moments::zeros(gaussians),
            sh: Moments::zeros(3 * sh_coeffs * gaussians),
            poses: vec![Moments::zeros(12); observations],
        }
    }

    fn groups(&self) -> impl Iterator<Item = &Moments> {
        [&self.position, &self.log_scale, &self.rotation, &self.opacity, &self.sh]
            .into_iter()
            .chain(self.poses.iter())
    }

    pub fn is_finite(&self) -> bool {
        self.groups().all(Moments::is_finite)
    }

    /// Little-endian binary: magic, `u64` pose-group count, then for each group
    /// `u64` step, `u64` length, the first moments and the second moments.
    pub fn write_to(&self, w: &mut impl Write) -> std::io::Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&(self.poses.len() as u64).to_le_bytes())?;
        for g in self.groups() {
            w.write_all(&g.step.to_le_bytes())?;
            w.write_all(&(g.len() as u64).to_le_bytes())?;
            for x in g.m.iter().chain(&g.v) {
                w.write_all(&x.to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_from(r: &mut impl Read) -> Result<Self> {
        let bad = |msg: &str| Error::InvalidArgument(format!("adam state: {msg}"));
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic).map_err(|_| bad("truncated"))?;
        if &magic != MAGIC {
            return Err(bad("bad magic"));
        }
        let mut word = [0u8; 8];
        let mut read_u64 = |r: &mut dyn Read| -> Result<u64> {
            r.read_exact(&mut word).map_err(|_| bad("truncated"))?;
            Ok(u64::from_le_bytes(word))
        };
        let poses = read_u64(r)? as usize;
        let mut groups = Vec::with_capacity(5 + poses);
        for _ in 0..5 + poses {
            let step = read_u64(r)?;
            let len = read_u64(r)? as usize;
            let mut vals = vec![0u8; 16 * len];
            r.read_exact(&mut vals).map_err(|_| bad("truncated"))?;
            let floats: Vec<f64> = vals
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
                .collect();
            groups.push(Moments {
                m: floats[..len].to_vec(),
                v: floats[len..].to_vec(),
                step,
            });
        }
        let mut it = groups.into_iter();
        let mut next = || it.next().expect("group count checked");
        Ok(AdamState {
            position: next(),
            log_scale: next(),
            rotation: next(),
            opacity: next(),
            sh: next(),
            poses: (0..poses).map(|_| next()).collect(),
        })
    }
}
