use alloc::collections::{BTreeMap, BTreeSet};
use alloc::string::String;
use alloc::vec::Vec;

use crate::FIRST_APPLICATION_UID;

/// Scalar or list value in the system configuration and app manifests.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(untagged)]
pub enum ConfigValue {
    Int(i32),
    Str(String),
    List(Vec<String>),
}

/// One installed guest app.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct AppRecord {
    pub uid: i32,
    pub package: String,
    #[serde(default)]
    pub permissions: Vec<String>,
    /// Manifest attributes such as `launch-mode`, `task-affinity`, `flags`.
    #[serde(default)]
    pub manifest: BTreeMap<String, ConfigValue>,
    #[serde(default)]
    pub skeleton: bool,
}

pub type SysConfig = BTreeMap<String, ConfigValue>;

/// Installed apps in install order. Construct with [`AppRegistry::new`].
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
#[serde(transparent)]
pub struct AppRegistry {
    apps: Vec<AppRecord>,
}

#[derive(Debug, Clone, PartialEq, Eq, thiserror::Error)]
pub enum RegistryError {
    #[error("uid {0} is installed twice")]
    DuplicateUid(i32),
    #[error("package `{0}` is installed twice")]
    DuplicatePackage(String),
    #[error("uid {0} is below the first application uid")]
    UidTooSmall(i32),
    #[error("expected exactly one skeleton app, found {0}")]
    SkeletonCount(usize),
}

impl AppRegistry {
    pub fn new(apps: Vec<AppRecord>) -> Result<AppRegistry, RegistryError> {
        let mut uids = BTreeSet::new();
        let mut packages = BTreeSet::new();
        for a in &apps {
            if a.uid < FIRST_APPLICATION_UID {
                return Err(RegistryError::UidTooSmall(a.uid));
            }
            if !uids.insert(a.uid) {
                return Err(RegistryError::DuplicateUid(a.uid));
            }
            if !packages.insert(a.package.as_str()) {
                return Err(RegistryError::DuplicatePackage(a.package.clone()));
            }
        }
        let skeletons = apps.iter().filter(|a| a.skeleton).count();
        if skeletons != 1 {
            return Err(RegistryError::SkeletonCount(skeletons));
        }
        Ok(AppRegistry { apps })
    }

    pub fn apps(&self) -> &[AppRecord] {
        &self.apps
    }

    pub fn skeleton(&self) -> &AppRecord {
        self.apps.iter().find(|a| a.skeleton).expect("validated")
    }

    pub fn by_package(&self, package: &str) -> Option<&AppRecord> {
        self.apps.iter().find(|a| a.package == package)
    }
}

impl<'de> serde::Deserialize<'de> for AppRegistry {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let apps = Vec::<AppRecord>::deserialize(d)?;
        AppRegistry::new(apps).map_err(serde::de::Error::custom)
    }
}

/// Everything the initialization phase reads besides the program: the
/// app registry and the system configuration.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct InitInputs {
    pub apps: AppRegistry,
    #[serde(default)]
    pub config: SysConfig,
}
