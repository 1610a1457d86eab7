use super::{Layout, NetError, PolicyArch, PolicyNet, ValueArch, ValueNet};
use serde::{Deserialize, Serialize};
use std::path::Path;

pub const CHECKPOINT_VERSION: u32 = 1;

/// Versioned snapshot of policy and value parameters, plus free-form trainer state.
///
/// Floats are written with shortest round-trip formatting so a save/load
/// cycle reproduces every parameter bit for bit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub policy_arch: PolicyArch,
    pub policy_layout: Layout,
    pub policy: Vec<f64>,
    pub value_arch: ValueArch,
    pub value_layout: Layout,
    pub value: Vec<f64>,
    #[serde(default)]
    pub meta: serde_json::Value,
}

impl Checkpoint {
    pub fn new(policy_net: &PolicyNet, policy: Vec<f64>, value_net: &ValueNet, value: Vec<f64>) -> Self {
        Self {
            version: CHECKPOINT_VERSION,
            policy_arch: *policy_net.arch(),
            policy_layout: policy_net.layout().clone(),
            policy,
            value_arch: *value_net.arch(),
            value_layout: value_net.layout().clone(),
            value,
            meta: serde_json::Value::Null,
        }
    }

    /// Rebuilds the networks and checks that layouts and lengths agree.
    pub fn networks(&self) -> Result<(PolicyNet, ValueNet), NetError> {
        if self.version != CHECKPOINT_VERSION {
            return Err(NetError::Version(self.version));
        }
        let policy_net = PolicyNet::new(self.policy_arch)?;
        let value_net = ValueNet::new(self.value_arch);
        if policy_net.layout() != &self.policy_layout {
            return Err(NetError::LayoutMismatch("policy layout differs from its architecture".into()));
        }
        if value_net.layout() != &self.value_layout {
            return Err(NetError::LayoutMismatch("value layout differs from its architecture".into()));
        }
        if self.policy.len() != policy_net.num_params() || self.value.len() != value_net.num_params() {
            return Err(NetError::LayoutMismatch(format!(
                "parameter counts {}/{} do not match layouts {}/{}",
                self.policy.len(),
                self.value.len(),
                policy_net.num_params(),
                value_net.num_params()
            )));
        }
        Ok((policy_net, value_net))
    }

    pub fn save(&self, path: &Path) -> Result<(), NetError> {
        let io = |source| NetError::Io { path: path.to_owned(), source };
        if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
            std::fs::create_dir_all(dir).map_err(io)?;
        }
        let json = serde_json::to_string(self).map_err(|source| NetError::Json { path: path.to_owned(), source })?;
        // write-then-rename so an interrupted save never leaves a truncated file
        let tmp = path.with_extension("json.tmp");
        std::fs::write(&tmp, json).map_err(io)?;
        std::fs::rename(&tmp, path).map_err(io)
    }

    pub fn load(path: &Path) -> Result<Self, NetError> {
        let text = std::fs::read_to_string(path).map_err(|source| NetError::Io { path: path.to_owned(), source })?;
        let ck: Self = serde_json::from_str(&text).map_err(|source| NetError::Json { path: path.to_owned(), source })?;
        ck.networks()?;
        Ok(ck)
    }
}
