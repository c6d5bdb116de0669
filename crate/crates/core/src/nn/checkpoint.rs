//! Line-oriented text checkpoints.
//!
//! ```text
//! snakenet v1
//! actor.l0.w 100x9 <900 values>
//! actor.l0.b 100 <100 values>
//! ...
//! ```
//! Values use Rust's shortest round-trip formatting, so a save/load cycle
//! reproduces every `f64` bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use super::mlp::{Activation, Mlp};
use super::policy::{Critic, GaussianPolicy};
use crate::error::{Error, Result};

pub const HEADER: &str = "snakenet v1";

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Checkpoint {
    pub tensors: Vec<Tensor>,
}

fn bad(msg: impl Into<String>) -> Error {
    Error::Checkpoint(msg.into())
}

impl Checkpoint {
    pub fn push(&mut self, name: impl Into<String>, shape: Vec<usize>, values: Vec<f64>) -> Result<()> {
        let name = name.into();
        if name.is_empty() || name.contains(char::is_whitespace) {
            return Err(bad(format!("invalid tensor name {name:?}")));
        }
        if shape.iter().product::<usize>() != values.len() {
            return Err(bad(format!("tensor {name}: shape {shape:?} does not match {} values", values.len())));
        }
        if self.get(&name).is_some() {
            return Err(bad(format!("duplicate tensor {name}")));
        }
        self.tensors.push(Tensor { name, shape, values });
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.tensors.iter().find(|t| t.name == name)
    }

    pub fn to_text(&self) -> String {
        let mut s = String::from(HEADER);
        s.push('\n');
        for t in &self.tensors {
            let shape: Vec<String> = t.shape.iter().map(|d| d.to_string()).collect();
            let _ = write!(s, "{} {}", t.name, shape.join("x"));
            for v in &t.values {
                let _ = write!(s, " {v:e}");
            }
            s.push('\n');
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        match lines.next() {
            Some(h) if h.trim_end() == HEADER => {}
            _ => return Err(bad(format!("missing `{HEADER}` header"))),
        }
        let mut ck = Checkpoint::default();
        for (n, line) in lines.enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_ascii_whitespace();
            let name = parts.next().unwrap();
            let shape_str = parts.next().ok_or_else(|| bad(format!("line {}: missing shape", n + 2)))?;
            let shape = shape_str
                .split('x')
                .map(|d| d.parse::<usize>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|_| bad(format!("line {}: bad shape {shape_str:?}", n + 2)))?;
            let values = parts
                .map(|v| v.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| bad(format!("line {}: {e}", n + 2)))?;
            ck.push(name, shape, values)?;
        }
        Ok(ck)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: &Path) -> Result<Self> {
        Self::from_text(&std::fs::read_to_string(path)?)
    }
}

fn push_mlp(ck: &mut Checkpoint, prefix: &str, net: &Mlp) -> Result<()> {
    for l in 0..net.num_layers() {
        let (w, b) = net.layer(l);
        let (i, o) = (net.sizes()[l], net.sizes()[l + 1]);
        ck.push(format!("{prefix}.l{l}.w"), vec![o, i], w.to_vec())?;
        ck.push(format!("{prefix}.l{l}.b"), vec![o], b.to_vec())?;
    }
    Ok(())
}

fn read_mlp(ck: &Checkpoint, prefix: &str, output: Activation) -> Result<Mlp> {
    let mut sizes = Vec::new();
    let mut weights = Vec::new();
    let mut l = 0;
    while let Some(w) = ck.get(&format!("{prefix}.l{l}.w")) {
        let b = ck.get(&format!("{prefix}.l{l}.b")).ok_or_else(|| bad(format!("{prefix}.l{l}.b missing")))?;
        let [o, i] = w.shape[..] else {
            return Err(bad(format!("{prefix}.l{l}.w must be 2-D")));
        };
        if b.shape != [o] {
            return Err(bad(format!("{prefix}.l{l}.b must have shape {o}")));
        }
        match sizes.last() {
            None => sizes.push(i),
            Some(&prev) if prev == i => {}
            Some(_) => return Err(bad(format!("{prefix}.l{l}.w input width does not chain"))),
        }
        sizes.push(o);
        weights.push((w, b));
        l += 1;
    }
    if weights.is_empty() {
        return Err(bad(format!("no layers for {prefix}")));
    }
    let mut net = Mlp::from_sizes(sizes, output)?;
    for (l, (w, b)) in weights.into_iter().enumerate() {
        let (dw, db) = net.layer_mut(l);
        dw.copy_from_slice(&w.values);
        db.copy_from_slice(&b.values);
    }
    Ok(net)
}

/// Serializes a policy/critic pair.
pub fn agent_checkpoint(policy: &GaussianPolicy, critic: &Critic) -> Result<Checkpoint> {
    let mut ck = Checkpoint::default();
    push_mlp(&mut ck, "actor", &policy.mean)?;
    ck.push("actor.log_std", vec![policy.log_std.len()], policy.log_std.clone())?;
    push_mlp(&mut ck, "critic", &critic.net)?;
    Ok(ck)
}

pub fn agent_from_checkpoint(ck: &Checkpoint) -> Result<(GaussianPolicy, Critic)> {
    let mean = read_mlp(ck, "actor", Activation::Tanh)?;
    let ls = ck.get("actor.log_std").ok_or_else(|| bad("actor.log_std missing"))?;
    let policy = GaussianPolicy::new(mean, ls.values.clone())?;
    let critic = Critic::new(read_mlp(ck, "critic", Activation::Linear)?)?;
    if critic.net.in_dim() != policy.obs_dim() {
        return Err(bad("actor and critic disagree on observation size"));
    }
    Ok((policy, critic))
}
