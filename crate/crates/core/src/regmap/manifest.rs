//! Machine-readable register manifest.

use alloc::string::{String, ToString};
use serde::{Deserialize, Serialize};

use super::{Access, Group, Kind, RegisterDescriptor};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub name: String,
    pub address: u16,
    pub width: u8,
    pub access: Access,
    pub kind: Kind,
    pub group: Group,
    pub reset: u32,
    pub description: String,
}

impl From<&RegisterDescriptor> for ManifestEntry {
    fn from(d: &RegisterDescriptor) -> Self {
        Self {
            name: d.name.to_string(),
            address: d.address,
            width: d.width,
            access: d.access,
            kind: d.kind,
            group: d.group,
            reset: d.reset_value,
            description: d.description.to_string(),
        }
    }
}
