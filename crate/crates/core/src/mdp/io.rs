//! JSON file format for an MDP together with its symmetry.

use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use super::{FiniteMdp, MdpSymmetry};
use crate::error::{invalid, Result};
use crate::groups::FiniteGroup;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SymmetryFile {
    pub group_tag: String,
    /// `state_perm[g][s] = g.s`, one row per group element in index order.
    pub state_perm: Vec<Vec<usize>>,
    pub action_perm: Vec<Vec<usize>>,
}

/// On-disk MDP. `reward[s][a]` and `transition[s][a][s']`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MdpFile {
    pub n_states: usize,
    pub n_actions: usize,
    pub gamma: f64,
    pub reward: Vec<Vec<f64>>,
    pub transition: Vec<Vec<Vec<f64>>>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub state_coords: Option<Vec<Vec<f64>>>,
    pub symmetry: SymmetryFile,
}

impl MdpFile {
    pub fn from_parts(m: &FiniteMdp<f64>, sym: &MdpSymmetry) -> Self {
        let (ns, na) = (m.n_states(), m.n_actions());
        let group = sym.group();
        Self {
            n_states: ns,
            n_actions: na,
            gamma: m.gamma(),
            reward: m.rewards().chunks(na).map(<[f64]>::to_vec).collect(),
            transition: (0..ns).map(|s| (0..na).map(|a| m.next_dist(s, a).to_vec()).collect()).collect(),
            state_coords: m.state_coords().map(<[Vec<f64>]>::to_vec),
            symmetry: SymmetryFile {
                group_tag: group.tag(),
                state_perm: group.elements().map(|g| sym.state_perm(g).to_vec()).collect(),
                action_perm: group.elements().map(|g| sym.action_perm(g).to_vec()).collect(),
            },
        }
    }

    pub fn into_parts(self) -> Result<(FiniteMdp<f64>, MdpSymmetry)> {
        let (ns, na) = (self.n_states, self.n_actions);
        if self.reward.len() != ns || self.reward.iter().any(|r| r.len() != na) {
            return invalid("reward must be an n_states x n_actions array");
        }
        if self.transition.len() != ns
            || self.transition.iter().any(|r| r.len() != na || r.iter().any(|p| p.len() != ns))
        {
            return invalid("transition must be an n_states x n_actions x n_states array");
        }
        let reward = self.reward.into_iter().flatten().collect();
        let transition = self.transition.into_iter().flatten().flatten().collect();
        let mut m = FiniteMdp::new(ns, na, reward, transition, self.gamma)?;
        if let Some(c) = self.state_coords {
            m = m.with_state_coords(c)?;
        }
        let group = Arc::new(FiniteGroup::from_tag(&self.symmetry.group_tag)?);
        let sym = MdpSymmetry::new(group, self.symmetry.state_perm, self.symmetry.action_perm)?;
        sym.check_matches(&m)?;
        Ok((m, sym))
    }

    pub fn from_json_str(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }

    pub fn to_json_string(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn read(path: &Path) -> Result<Self> {
        Self::from_json_str(&std::fs::read_to_string(path)?)
    }

    pub fn write(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_json_string()? + "\n")?;
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::groups::build_cyclic;

    #[test]
    fn round_trip() {
        let m = FiniteMdp::new(2, 1, vec![0.25, 0.25], vec![0.1, 0.9, 0.9, 0.1], 0.9)
            .unwrap()
            .with_state_coords(vec![vec![0.0], vec![1.5]])
            .unwrap();
        let c2 = Arc::new(build_cyclic(2).unwrap());
        let sym = MdpSymmetry::new(c2, vec![vec![0, 1], vec![1, 0]], vec![vec![0], vec![0]]).unwrap();
        let f = MdpFile::from_parts(&m, &sym);
        let back = MdpFile::from_json_str(&f.to_json_string().unwrap()).unwrap();
        let (m2, sym2) = back.into_parts().unwrap();
        assert_eq!(m, m2);
        assert_eq!(sym, sym2);
    }

    #[test]
    fn ragged_tables_rejected() {
        let json = r#"{"n_states":2,"n_actions":1,"gamma":0.5,"reward":[[0.0]],
            "transition":[[[1.0,0.0]],[[0.0,1.0]]],
            "symmetry":{"group_tag":"c2","state_perm":[[0,1],[1,0]],"action_perm":[[0],[0]]}}"#;
        assert!(MdpFile::from_json_str(json).unwrap().into_parts().is_err());
    }
}
