use std::io::{Read, Write};
use std::path::Path;

use sha2::{Digest, Sha256};

use super::grid::{GridDim, GridSpec, Interpolator};
use super::{ModelTag, StrategicState};
use crate::error::{Error, Result};
use crate::reward::Player;

pub const MAGIC: &[u8; 4] = b"SGVT";
pub const FORMAT_VERSION: u32 = 1;

/// Solved strategic values `V_A`, `V_H` and the leader policy for stages
/// `0..=horizon`. Stage `horizon + 1` is the all-zero terminal condition and
/// is not stored.
#[derive(Debug, Clone, PartialEq)]
pub struct ValueTable {
    pub model: ModelTag,
    pub grid: GridSpec,
    pub horizon: usize,
    pub beta: f64,
    pub dk: f64,
    pub leader_actions: Vec<Vec<f64>>,
    pub follower_actions: Vec<Vec<f64>>,
    pub reward_hash: [u8; 32],
    values_av: Vec<f64>,
    values_human: Vec<f64>,
    policy: Vec<u16>,
    interp: Interp,
}

// Interpolator is derived data; equality ignores it.
#[derive(Debug, Clone)]
struct Interp(Interpolator);

impl PartialEq for Interp {
    fn eq(&self, _: &Self) -> bool {
        true
    }
}

impl ValueTable {
    #[allow(clippy::too_many_arguments)]
    pub(crate) fn from_parts(
        model: ModelTag,
        grid: GridSpec,
        horizon: usize,
        beta: f64,
        dk: f64,
        leader_actions: Vec<Vec<f64>>,
        follower_actions: Vec<Vec<f64>>,
        reward_hash: [u8; 32],
        values_av: Vec<f64>,
        values_human: Vec<f64>,
        policy: Vec<u16>,
    ) -> Self {
        let n = grid.cell_count() * (horizon + 1);
        assert_eq!(values_av.len(), n);
        assert_eq!(values_human.len(), n);
        assert_eq!(policy.len(), n);
        let interp = Interp(grid.interpolator());
        Self {
            model,
            grid,
            horizon,
            beta,
            dk,
            leader_actions,
            follower_actions,
            reward_hash,
            values_av,
            values_human,
            policy,
            interp,
        }
    }

    /// A table holding the same value at every node and stage, for both
    /// players. Useful as a neutral or test terminal reward.
    pub fn constant(model: ModelTag, grid: GridSpec, horizon: usize, value: f64) -> Self {
        let n = grid.cell_count() * (horizon + 1);
        Self::from_parts(
            model,
            grid,
            horizon,
            0.0,
            0.5,
            Vec::new(),
            Vec::new(),
            [0; 32],
            vec![value; n],
            vec![value; n],
            vec![0; n],
        )
    }

    /// A table whose node values are `f(node coordinates)` at every stage,
    /// for both players.
    pub fn from_fn(model: ModelTag, grid: GridSpec, horizon: usize, f: impl Fn(&[f64]) -> f64) -> Self {
        let cells = grid.cell_count();
        let mut coords = vec![0.0; grid.ndims()];
        let stage: Vec<f64> = (0..cells)
            .map(|c| {
                grid.node_coords(c, &mut coords);
                f(&coords)
            })
            .collect();
        let values: Vec<f64> = (0..=horizon).flat_map(|_| stage.iter().copied()).collect();
        let n = values.len();
        Self::from_parts(
            model,
            grid,
            horizon,
            0.0,
            0.5,
            Vec::new(),
            Vec::new(),
            [0; 32],
            values.clone(),
            values,
            vec![0; n],
        )
    }

    pub fn ndims(&self) -> usize {
        self.grid.ndims()
    }

    /// Stored stages (`horizon + 1`).
    pub fn stages(&self) -> usize {
        self.horizon + 1
    }

    fn check_stage(&self, k: usize) -> Result<()> {
        if k > self.horizon + 1 {
            Err(Error::StageOutOfRange {
                stage: k,
                stages: self.horizon + 2,
            })
        } else {
            Ok(())
        }
    }

    fn check_dims(&self, n: usize) -> Result<()> {
        if n != self.ndims() {
            Err(Error::DimensionMismatch {
                table: self.ndims(),
                query: n,
            })
        } else {
            Ok(())
        }
    }

    /// Node values of one stage (`k ≤ horizon`).
    pub fn stage_values(&self, player: Player, k: usize) -> &[f64] {
        let cells = self.grid.cell_count();
        let all = match player {
            Player::Av => &self.values_av,
            Player::Human => &self.values_human,
        };
        &all[k * cells..(k + 1) * cells]
    }

    pub fn stage_policy(&self, k: usize) -> &[u16] {
        let cells = self.grid.cell_count();
        &self.policy[k * cells..(k + 1) * cells]
    }

    /// Stored value at a node.
    pub fn node_value(&self, player: Player, k: usize, cell: usize) -> f64 {
        if k > self.horizon {
            0.0
        } else {
            self.stage_values(player, k)[cell]
        }
    }

    /// Multilinear interpolation on raw coordinates in declared dimension
    /// order. Coordinates outside the grid are clamped to its boundary.
    pub fn lookup(&self, point: &[f64], k: usize, player: Player) -> Result<f64> {
        self.check_dims(point.len())?;
        self.check_stage(k)?;
        if k > self.horizon {
            return Ok(0.0);
        }
        Ok(self.interp.0.eval(self.stage_values(player, k), point))
    }

    pub fn lookup_value(&self, s: &StrategicState, k: usize, player: Player) -> Result<f64> {
        self.check_model(s)?;
        self.lookup(&s.to_vec(), k, player)
    }

    fn check_model(&self, s: &StrategicState) -> Result<()> {
        self.check_dims(s.ndims())?;
        let ok = matches!(
            (self.model, s),
            (ModelTag::ThreeD, StrategicState::ThreeD(_))
                | (ModelTag::FourD, StrategicState::FourD(_))
                | (ModelTag::Custom, _)
        );
        if ok {
            Ok(())
        } else {
            Err(Error::DimensionMismatch {
                table: self.ndims(),
                query: s.ndims(),
            })
        }
    }

    /// Value and exact interpolant derivative, for use inside gradient-based
    /// optimizers.
    pub(crate) fn lookup_with_grad(&self, point: &[f64], k: usize, player: Player, grad: &mut [f64]) -> f64 {
        if k > self.horizon {
            grad.iter_mut().for_each(|g| *g = 0.0);
            return 0.0;
        }
        self.interp.0.eval_with_grad(self.stage_values(player, k), point, grad)
    }

    /// Gradient of the interpolated value by central differences with a step
    /// of one grid spacing per dimension, one-sided at the boundary nodes.
    pub fn value_gradient(&self, s: &StrategicState, k: usize, player: Player) -> Result<Vec<f64>> {
        self.check_model(s)?;
        self.gradient_at(&s.to_vec(), k, player)
    }

    pub fn gradient_at(&self, point: &[f64], k: usize, player: Player) -> Result<Vec<f64>> {
        self.check_dims(point.len())?;
        self.check_stage(k)?;
        let mut p: Vec<f64> = point
            .iter()
            .zip(&self.grid.dims)
            .map(|(&v, d)| v.clamp(d.min, d.max))
            .collect();
        let mut grad = Vec::with_capacity(p.len());
        for (i, d) in self.grid.dims.iter().enumerate() {
            let h = d.spacing();
            let c = p[i];
            let hi = (c + h).min(d.max);
            let lo = (c - h).max(d.min);
            p[i] = hi;
            let f_hi = self.lookup(&p, k, player)?;
            p[i] = lo;
            let f_lo = self.lookup(&p, k, player)?;
            p[i] = c;
            grad.push((f_hi - f_lo) / (hi - lo));
        }
        Ok(grad)
    }

    /// Leader action index stored at a node.
    pub fn policy_at(&self, k: usize, cell: usize) -> u16 {
        self.stage_policy(k)[cell]
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut b = Vec::with_capacity(64 + 18 * self.values_av.len());
        b.extend_from_slice(MAGIC);
        b.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        b.push(self.model.to_byte());
        b.extend_from_slice(&self.beta.to_le_bytes());
        b.extend_from_slice(&(self.horizon as u16).to_le_bytes());
        b.extend_from_slice(&self.dk.to_le_bytes());
        b.push(self.grid.ndims() as u8);
        for d in &self.grid.dims {
            b.extend_from_slice(&d.min.to_le_bytes());
            b.extend_from_slice(&d.max.to_le_bytes());
            b.extend_from_slice(&d.count.to_le_bytes());
        }
        for list in [&self.leader_actions, &self.follower_actions] {
            let width = list.first().map_or(0, Vec::len);
            b.extend_from_slice(&(list.len() as u32).to_le_bytes());
            b.extend_from_slice(&(width as u32).to_le_bytes());
            for tuple in list {
                for v in tuple {
                    b.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        b.extend_from_slice(&self.reward_hash);
        for v in self.values_av.iter().chain(&self.values_human) {
            b.extend_from_slice(&v.to_le_bytes());
        }
        for p in &self.policy {
            b.extend_from_slice(&p.to_le_bytes());
        }
        let digest = Sha256::digest(&b);
        b.extend_from_slice(&digest);
        b
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(Error::Format(format!(
                "bad magic bytes, not a value table (expected version {FORMAT_VERSION})"
            )));
        }
        let version = r.u32()?;
        if version != FORMAT_VERSION {
            return Err(Error::Version {
                found: version,
                expected: FORMAT_VERSION,
            });
        }
        if bytes.len() < 32 {
            return Err(Error::Format("truncated file".into()));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(Error::Format(format!(
                "checksum mismatch (file corrupted; expected version {FORMAT_VERSION} layout)"
            )));
        }
        let model = ModelTag::from_byte(r.u8()?)?;
        let beta = r.f64()?;
        let horizon = r.u16()? as usize;
        let dk = r.f64()?;
        let ndims = r.u8()? as usize;
        let names = model.dim_names(ndims);
        if names.len() != ndims {
            return Err(Error::Format(format!("model {model} with {ndims} dimensions")));
        }
        let mut dims = Vec::with_capacity(ndims);
        for name in names {
            let min = r.f64()?;
            let max = r.f64()?;
            let count = r.u32()?;
            dims.push(GridDim::new(name, min, max, count));
        }
        let grid = GridSpec::new(dims).map_err(|e| Error::Format(e.to_string()))?;
        let mut lists = Vec::new();
        for _ in 0..2 {
            let n = r.u32()? as usize;
            let width = r.u32()? as usize;
            let mut list = Vec::with_capacity(n);
            for _ in 0..n {
                list.push((0..width).map(|_| r.f64()).collect::<Result<Vec<_>>>()?);
            }
            lists.push(list);
        }
        let follower_actions = lists.pop().unwrap();
        let leader_actions = lists.pop().unwrap();
        let mut reward_hash = [0u8; 32];
        reward_hash.copy_from_slice(r.take(32)?);
        let n = grid.cell_count() * (horizon + 1);
        let values_av = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let values_human = (0..n).map(|_| r.f64()).collect::<Result<Vec<_>>>()?;
        let policy = (0..n).map(|_| r.u16()).collect::<Result<Vec<_>>>()?;
        if r.pos != body.len() {
            return Err(Error::Format("trailing bytes before checksum".into()));
        }
        Ok(Self::from_parts(
            model,
            grid,
            horizon,
            beta,
            dk,
            leader_actions,
            follower_actions,
            reward_hash,
            values_av,
            values_human,
            policy,
        ))
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let mut f = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let mut bytes = Vec::new();
        std::fs::File::open(path)
            .and_then(|mut f| f.read_to_end(&mut bytes))
            .map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos + n;
        if end > self.bytes.len() {
            return Err(Error::Format("truncated file".into()));
        }
        let s = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().unwrap()))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn f64(&mut self) -> Result<f64> {
        Ok(f64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }
}
