use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ModelConfig;
use super::group::ParamGroup;
use super::layers::{Bound, ConvBase, Head, Module};
use crate::autodiff::{load_weights, save_weights, Gradients, Graph, Tensor, Var};
use crate::dataset::Task;
use crate::error::{Error, Result};
use crate::seed::derive_seed;

pub const MODEL_MANIFEST: &str = "model.json";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Group {
    Base,
    EmotionHead,
    IdentityHead,
}

/// Shared conv base feeding an emotion head and an identity head.
#[derive(Clone, Debug)]
pub struct HybridModel {
    pub base: ParamGroup<ConvBase>,
    pub emotion_head: ParamGroup<Head>,
    pub identity_head: ParamGroup<Head>,
}

/// Handles produced by [`HybridModel::forward`].
pub struct HybridForward {
    pub features: Var,
    pub emotion: Var,
    pub identity: Var,
    base: Bound,
    emotion_head: Bound,
    identity_head: Bound,
}

impl HybridModel {
    pub fn new(config: &ModelConfig, num_emotions: usize, num_identities: usize, seed: u64) -> Result<Self> {
        let base = ConvBase::new(config, derive_seed(seed, &[&"base"]))?;
        let emotion = Head::new(config, num_emotions, derive_seed(seed, &[&"emotion_head"]))?;
        let identity = Head::new(config, num_identities, derive_seed(seed, &[&"identity_head"]))?;
        Ok(HybridModel::from_parts(base, emotion, identity))
    }

    pub fn from_parts(base: ConvBase, emotion_head: Head, identity_head: Head) -> Self {
        HybridModel {
            base: ParamGroup::new(base),
            emotion_head: ParamGroup::new(emotion_head),
            identity_head: ParamGroup::new(identity_head),
        }
    }

    pub fn config(&self) -> &ModelConfig {
        self.base.config()
    }

    pub fn head(&self, task: Task) -> &ParamGroup<Head> {
        match task {
            Task::Emotion => &self.emotion_head,
            Task::Identity => &self.identity_head,
        }
    }

    pub fn is_frozen(&self, group: Group) -> bool {
        match group {
            Group::Base => self.base.is_frozen(),
            Group::EmotionHead => self.emotion_head.is_frozen(),
            Group::IdentityHead => self.identity_head.is_frozen(),
        }
    }

    pub fn set_frozen(&mut self, group: Group, frozen: bool) {
        match group {
            Group::Base => self.base.set_frozen(frozen),
            Group::EmotionHead => self.emotion_head.set_frozen(frozen),
            Group::IdentityHead => self.identity_head.set_frozen(frozen),
        }
    }

    /// Fresh He-initialized weights for a head; its momentum is dropped.
    pub fn reinit_head(&mut self, group: Group, seed: u64) -> Result<()> {
        let config = self.config().clone();
        let slot = match group {
            Group::Base => return Err(Error::Protocol("the conv base cannot be re-initialized".into())),
            Group::EmotionHead => &mut self.emotion_head,
            Group::IdentityHead => &mut self.identity_head,
        };
        let head = Head::new(&config, slot.num_classes(), seed)?;
        slot.replace(head);
        Ok(())
    }

    /// One base evaluation shared by both heads.
    pub fn forward<'a>(&'a self, g: &mut Graph<'a>, pixels: &'a [f64]) -> Result<HybridForward> {
        let (features, base) = self.base.forward_image(g, pixels)?;
        let (emotion, emotion_head) = self.emotion_head.forward(g, features)?;
        let (identity, identity_head) = self.identity_head.forward(g, features)?;
        Ok(HybridForward { features, emotion, identity, base, emotion_head, identity_head })
    }

    pub fn accumulate(&mut self, fwd: &HybridForward, grads: &Gradients) -> Result<()> {
        self.base.accumulate(&fwd.base, grads)?;
        self.emotion_head.accumulate(&fwd.emotion_head, grads)?;
        self.identity_head.accumulate(&fwd.identity_head, grads)
    }

    /// SGD on every unfrozen group; frozen groups only have their grads cleared.
    pub fn step(&mut self, learning_rate: f64, momentum: f64) -> Result<()> {
        self.base.step(learning_rate, momentum)?;
        self.emotion_head.step(learning_rate, momentum)?;
        self.identity_head.step(learning_rate, momentum)
    }

    /// Drop every group's momentum buffers.
    pub fn reset_optimizers(&mut self) {
        self.base.reset_optimizer();
        self.emotion_head.reset_optimizer();
        self.identity_head.reset_optimizer();
    }

    pub fn zero_grad(&mut self) {
        self.base.zero_grad();
        self.emotion_head.zero_grad();
        self.identity_head.zero_grad();
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let manifest = ModelManifest {
            kind: ModelKind::Hybrid,
            config: self.config().clone(),
            heads: vec![
                HeadSpec { name: "emotion_head".into(), task: Task::Emotion, num_classes: self.emotion_head.num_classes() },
                HeadSpec { name: "identity_head".into(), task: Task::Identity, num_classes: self.identity_head.num_classes() },
            ],
        };
        write_manifest(dir, &manifest)?;
        let mut named = named_params("base", self.base.module());
        named.extend(named_params("emotion_head", self.emotion_head.module()));
        named.extend(named_params("identity_head", self.identity_head.module()));
        save_weights(dir, &named)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = read_manifest(dir)?;
        if manifest.kind != ModelKind::Hybrid || manifest.heads.len() != 2 {
            return Err(Error::Config(format!("{} does not describe a hybrid model", dir.display())));
        }
        let mut model = HybridModel::new(&manifest.config, manifest.heads[0].num_classes, manifest.heads[1].num_classes, 0)?;
        let mut weights = load_weights(dir)?.into_iter();
        fill("base", model.base.module_mut_unchecked(), &mut weights)?;
        fill("emotion_head", model.emotion_head.module_mut_unchecked(), &mut weights)?;
        fill("identity_head", model.identity_head.module_mut_unchecked(), &mut weights)?;
        Ok(model)
    }
}

/// Conv base plus one head: the Emotion and Face baselines.
#[derive(Clone, Debug)]
pub struct Classifier {
    pub base: ParamGroup<ConvBase>,
    pub head: ParamGroup<Head>,
    pub task: Task,
}

impl Classifier {
    pub fn new(config: &ModelConfig, task: Task, num_classes: usize, seed: u64) -> Result<Self> {
        let base = ConvBase::new(config, derive_seed(seed, &[&"base"]))?;
        let head = Head::new(config, num_classes, derive_seed(seed, &[&"head"]))?;
        Ok(Classifier { base: ParamGroup::new(base), head: ParamGroup::new(head), task })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        let manifest = ModelManifest {
            kind: ModelKind::Classifier,
            config: self.base.config().clone(),
            heads: vec![HeadSpec { name: "head".into(), task: self.task, num_classes: self.head.num_classes() }],
        };
        write_manifest(dir, &manifest)?;
        let mut named = named_params("base", self.base.module());
        named.extend(named_params("head", self.head.module()));
        save_weights(dir, &named)
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let manifest = read_manifest(dir)?;
        if manifest.kind != ModelKind::Classifier || manifest.heads.len() != 1 {
            return Err(Error::Config(format!("{} does not describe a single-head classifier", dir.display())));
        }
        let spec = &manifest.heads[0];
        let mut model = Classifier::new(&manifest.config, spec.task, spec.num_classes, 0)?;
        let mut weights = load_weights(dir)?.into_iter();
        fill("base", model.base.module_mut_unchecked(), &mut weights)?;
        fill("head", model.head.module_mut_unchecked(), &mut weights)?;
        Ok(model)
    }
}

/// Persist a standalone head (probe) with its manifest.
pub fn save_head(dir: &Path, config: &ModelConfig, head: &Head, task: Task) -> Result<()> {
    let manifest = ModelManifest {
        kind: ModelKind::Head,
        config: config.clone(),
        heads: vec![HeadSpec { name: "head".into(), task, num_classes: head.num_classes() }],
    };
    write_manifest(dir, &manifest)?;
    save_weights(dir, &named_params("head", head))
}

pub fn load_head(dir: &Path) -> Result<(Head, Task)> {
    let manifest = read_manifest(dir)?;
    if manifest.kind != ModelKind::Head || manifest.heads.len() != 1 {
        return Err(Error::Config(format!("{} does not describe a head", dir.display())));
    }
    let spec = &manifest.heads[0];
    let mut head = Head::new(&manifest.config, spec.num_classes, 0)?;
    fill("head", &mut head, &mut load_weights(dir)?.into_iter())?;
    Ok((head, spec.task))
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
enum ModelKind {
    Hybrid,
    Classifier,
    Head,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct HeadSpec {
    name: String,
    task: Task,
    num_classes: usize,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
struct ModelManifest {
    kind: ModelKind,
    config: ModelConfig,
    heads: Vec<HeadSpec>,
}

fn write_manifest(dir: &Path, manifest: &ModelManifest) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let path = dir.join(MODEL_MANIFEST);
    let json = serde_json::to_string_pretty(manifest).map_err(|e| Error::json(&path, e))?;
    fs::write(&path, json).map_err(|e| Error::io(&path, e))
}

fn read_manifest(dir: &Path) -> Result<ModelManifest> {
    let path = dir.join(MODEL_MANIFEST);
    let raw = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    serde_json::from_str(&raw).map_err(|e| Error::json(&path, e))
}

fn named_params<'a, M: Module>(prefix: &str, module: &'a M) -> Vec<(String, &'a Tensor)> {
    module
        .param_names()
        .into_iter()
        .zip(module.params())
        .map(|(n, p)| (format!("{prefix}.{n}"), p))
        .collect()
}

fn fill<M: Module>(prefix: &str, module: &mut M, weights: &mut impl Iterator<Item = (String, Tensor)>) -> Result<()> {
    let names = module.param_names();
    for (name, param) in names.into_iter().zip(module.params_mut()) {
        let want = format!("{prefix}.{name}");
        let (got, t) = weights
            .next()
            .ok_or_else(|| Error::Config(format!("weights end before {want}")))?;
        if got != want || t.shape() != param.shape() {
            return Err(Error::shape(
                "load",
                format!("expected {want} {:?}, found {got} {:?}", param.shape(), t.shape()),
            ));
        }
        param.data_mut().copy_from_slice(t.data());
    }
    Ok(())
}
