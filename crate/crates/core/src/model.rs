//! Learner families behind one interface, and the versioned text model file.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use thiserror::Error;

use crate::config::{ConfigError, KvConfig};
use crate::dataset::{encode_design, DataError, DataTable, DesignEncoder, EncodedFeature, Standardization};
use crate::linear::{fit_elastic_net, fit_logit, predict_proba, Coding, Convergence, LinearError, LinearFit, Penalty};
use crate::resample::{ResampleError, ResampleMethod, ResamplePlan};
use crate::trees::{
    fit_boost, fit_cart, fit_forest, BoostModel, BoostParams, CartParams, FeatureKind, FeatureLayout, Features, Forest,
    ForestParams, Node, Split, Tree, TreeError, VoteMode,
};

const FORMAT_HEADER: &str = "lapsekit-model";
const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ModelError {
    #[error("unknown model family {0:?} (expected logit, elanet, cart, rf or xgb)")]
    UnknownFamily(String),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Linear(#[from] LinearError),
    #[error(transparent)]
    Tree(#[from] TreeError),
    #[error(transparent)]
    Resample(#[from] ResampleError),
    #[error("model file line {line}: {message}")]
    Format { line: usize, message: String },
    #[error("data schema {found} does not match the model's schema {expected}")]
    SchemaMismatch { expected: String, found: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ModelFamily {
    Logit,
    Elanet,
    Cart,
    Rf,
    Xgb,
}

impl ModelFamily {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelFamily::Logit => "logit",
            ModelFamily::Elanet => "elanet",
            ModelFamily::Cart => "cart",
            ModelFamily::Rf => "rf",
            ModelFamily::Xgb => "xgb",
        }
    }
}

impl FromStr for ModelFamily {
    type Err = ModelError;

    fn from_str(s: &str) -> Result<Self, ModelError> {
        Ok(match s {
            "logit" => ModelFamily::Logit,
            "elanet" => ModelFamily::Elanet,
            "cart" => ModelFamily::Cart,
            "rf" => ModelFamily::Rf,
            "xgb" => ModelFamily::Xgb,
            other => return Err(ModelError::UnknownFamily(other.to_string())),
        })
    }
}

impl fmt::Display for ModelFamily {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A family with all of its hyperparameters resolved.
#[derive(Debug, Clone, PartialEq)]
pub enum ModelSpec {
    Logit,
    Elanet { lambda: f64, alpha: f64 },
    Cart(CartParams),
    Rf(ForestParams),
    Xgb(BoostParams),
}

fn opt_depth(cfg: &mut KvConfig) -> Result<Option<usize>, ConfigError> {
    match cfg.take_str("max_depth") {
        None => Ok(None),
        Some(v) if v == "none" => Ok(None),
        Some(v) => v.parse().map(Some).map_err(|_| ConfigError::InvalidValue {
            key: "max_depth".into(),
            value: v,
        }),
    }
}

fn depth_str(d: Option<usize>) -> String {
    d.map_or("none".to_string(), |d| d.to_string())
}

impl ModelSpec {
    pub fn family(&self) -> ModelFamily {
        match self {
            ModelSpec::Logit => ModelFamily::Logit,
            ModelSpec::Elanet { .. } => ModelFamily::Elanet,
            ModelSpec::Cart(_) => ModelFamily::Cart,
            ModelSpec::Rf(_) => ModelFamily::Rf,
            ModelSpec::Xgb(_) => ModelFamily::Xgb,
        }
    }

    /// Builds a spec and resampling plan from `key = value` pairs. Missing
    /// keys take their defaults; unknown keys are an error. `seed` feeds the
    /// forest and the resampler.
    ///
    /// Keys: `osw.method` (none, oversample, smote; oversample when only a
    /// rate is given), `osw.rate`, `osw.k`, and per family
    /// elanet `lambda`, `alpha`; cart `nodesize`, `max_depth`;
    /// rf `ntree`, `ntry`, `nodesize`, `max_depth`;
    /// xgb `rounds`, `eta`, `max_depth`, `reg_l1`, `reg_l2`, `reg_leafcount`, `min_child_hessian`.
    pub fn from_params(
        family: ModelFamily,
        params: &[(String, String)],
        seed: u64,
    ) -> Result<(ModelSpec, ResamplePlan), ModelError> {
        let mut cfg = KvConfig::default();
        for (k, v) in params {
            cfg.insert(k, v)?;
        }
        let method = cfg.take_str("osw.method");
        let rate: Option<f64> = cfg.take("osw.rate")?;
        let k_neighbors = cfg.take_or("osw.k", 5usize)?;
        let method = match method.as_deref() {
            None if rate.is_some_and(|r| r != 1.0) => ResampleMethod::RandomOversample,
            None => ResampleMethod::None,
            Some(m) => ResampleMethod::parse(m).ok_or(ConfigError::InvalidValue {
                key: "osw.method".into(),
                value: m.to_string(),
            })?,
        };
        let plan = ResamplePlan {
            method,
            rate: rate.unwrap_or(1.0),
            k_neighbors,
            seed: crate::trees::derive_seed(seed, 0x5a17),
        };
        let spec = match family {
            ModelFamily::Logit => ModelSpec::Logit,
            ModelFamily::Elanet => ModelSpec::Elanet {
                lambda: cfg.take("lambda")?.ok_or_else(|| ConfigError::MissingKey("lambda".into()))?,
                alpha: cfg.take_or("alpha", 1.0)?,
            },
            ModelFamily::Cart => ModelSpec::Cart(CartParams {
                min_node_size: cfg.take_or("nodesize", 1)?,
                max_depth: opt_depth(&mut cfg)?,
                ntry: None,
            }),
            ModelFamily::Rf => ModelSpec::Rf(ForestParams {
                ntree: cfg.take_or("ntree", 500)?,
                ntry: cfg.take("ntry")?,
                min_node_size: cfg.take_or("nodesize", 1)?,
                max_depth: opt_depth(&mut cfg)?,
                seed,
                bootstrap: true,
            }),
            ModelFamily::Xgb => {
                let d = BoostParams::default();
                ModelSpec::Xgb(BoostParams {
                    rounds: cfg.take_or("rounds", d.rounds)?,
                    eta: cfg.take_or("eta", d.eta)?,
                    max_depth: cfg.take_or("max_depth", d.max_depth)?,
                    l1: cfg.take_or("reg_l1", d.l1)?,
                    l2: cfg.take_or("reg_l2", d.l2)?,
                    reg_leafcount: cfg.take_or("reg_leafcount", d.reg_leafcount)?,
                    min_child_hessian: cfg.take_or("min_child_hessian", d.min_child_hessian)?,
                })
            }
        };
        cfg.finish()?;
        Ok((spec, plan))
    }

    /// Every hyperparameter as `key = value`, readable by [`ModelSpec::from_params`].
    pub fn to_params(&self) -> Vec<(String, String)> {
        let kv = |k: &str, v: String| (k.to_string(), v);
        match self {
            ModelSpec::Logit => vec![],
            ModelSpec::Elanet { lambda, alpha } => vec![kv("lambda", lambda.to_string()), kv("alpha", alpha.to_string())],
            ModelSpec::Cart(p) => vec![
                kv("nodesize", p.min_node_size.to_string()),
                kv("max_depth", depth_str(p.max_depth)),
            ],
            ModelSpec::Rf(p) => {
                let mut out = vec![kv("ntree", p.ntree.to_string())];
                if let Some(t) = p.ntry {
                    out.push(kv("ntry", t.to_string()));
                }
                out.push(kv("nodesize", p.min_node_size.to_string()));
                out.push(kv("max_depth", depth_str(p.max_depth)));
                out
            }
            ModelSpec::Xgb(p) => vec![
                kv("rounds", p.rounds.to_string()),
                kv("eta", p.eta.to_string()),
                kv("max_depth", p.max_depth.to_string()),
                kv("reg_l1", p.l1.to_string()),
                kv("reg_l2", p.l2.to_string()),
                kv("reg_leafcount", p.reg_leafcount.to_string()),
                kv("min_child_hessian", p.min_child_hessian.to_string()),
            ],
        }
    }

    /// Ordering used to break ties between equally good specs: fewer trees,
    /// then shallower, then stronger penalty.
    pub fn size_key(&self) -> (usize, usize, f64) {
        match self {
            ModelSpec::Logit => (1, usize::MAX, 0.0),
            ModelSpec::Elanet { lambda, .. } => (1, usize::MAX, -lambda),
            ModelSpec::Cart(p) => (1, p.max_depth.unwrap_or(usize::MAX), 0.0),
            ModelSpec::Rf(p) => (p.ntree, p.max_depth.unwrap_or(usize::MAX), 0.0),
            ModelSpec::Xgb(p) => (p.rounds, p.max_depth, 0.0),
        }
    }
}

pub fn resample_params(plan: &ResamplePlan) -> Vec<(String, String)> {
    match plan.method {
        ResampleMethod::None => vec![("osw.method".into(), "none".into())],
        m => {
            let mut out = vec![
                ("osw.method".into(), m.as_str().to_string()),
                ("osw.rate".into(), plan.rate.to_string()),
            ];
            if m == ResampleMethod::Smote {
                out.push(("osw.k".into(), plan.k_neighbors.to_string()));
            }
            out
        }
    }
}

/// A fitted model of any family.
#[derive(Debug, Clone, PartialEq)]
pub enum Model {
    /// Plain logit (no penalty) or elastic net, on a standardized design.
    Linear(LinearFit),
    Cart { layout: FeatureLayout, tree: Tree },
    Forest(Forest),
    /// Booster on the unstandardized one-hot design.
    Boost { model: BoostModel, encoder: DesignEncoder },
}

/// Fits `spec` on every row of `train`.
pub fn fit_model(spec: &ModelSpec, train: &DataTable) -> Result<Model, ModelError> {
    train.require_both_classes()?;
    let labels = train.labels();
    Ok(match spec {
        ModelSpec::Logit => Model::Linear(fit_logit(&encode_design(train, true)?, labels)?),
        ModelSpec::Elanet { lambda, alpha } => {
            Model::Linear(fit_elastic_net(&encode_design(train, true)?, labels, *lambda, *alpha)?)
        }
        ModelSpec::Cart(p) => {
            let f = Features::from_table(train)?;
            Model::Cart {
                tree: fit_cart(&f, labels, p)?,
                layout: f.layout().clone(),
            }
        }
        ModelSpec::Rf(p) => Model::Forest(fit_forest(&Features::from_table(train)?, labels, p)?),
        ModelSpec::Xgb(p) => {
            let design = encode_design(train, false)?;
            let model = fit_boost(&Features::from_design(&design), labels, p)?;
            Model::Boost {
                model,
                encoder: design.encoder().clone(),
            }
        }
    })
}

impl Model {
    /// Positive-class scores: probabilities for the linear models and the
    /// booster, mean leaf proportions for trees and forests.
    pub fn score(&self, table: &DataTable) -> Result<Vec<f64>, ModelError> {
        Ok(match self {
            Model::Linear(fit) => predict_proba(fit, &fit.encoder.apply(table)?)?,
            Model::Cart { layout, tree } => tree.predict(&layout.extract(table)?),
            Model::Forest(forest) => forest.predict(&forest.layout.extract(table)?, VoteMode::Proportion),
            Model::Boost { model, encoder } => {
                model.predict_proba(&Features::from_design(&encoder.apply(table)?))
            }
        })
    }
}

/// A model with the metadata stored in its file.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub family: ModelFamily,
    /// Canonical hyperparameters, including the resampling plan.
    pub params: Vec<(String, String)>,
    pub seed: u64,
    /// Digest of the schema of the training data.
    pub schema_digest: String,
    /// Metrics on the training rows, e.g. `auc.tr`.
    pub metrics: Vec<(String, f64)>,
    pub model: Model,
}

impl TrainedModel {
    /// Scores `table` after checking it has the training schema.
    pub fn score(&self, table: &DataTable) -> Result<Vec<f64>, ModelError> {
        let found = table.schema().digest();
        if found != self.schema_digest {
            return Err(ModelError::SchemaMismatch {
                expected: self.schema_digest.clone(),
                found,
            });
        }
        self.model.score(table)
    }

    pub fn write<W: Write>(&self, mut out: W) -> Result<(), ModelError> {
        writeln!(out, "{FORMAT_HEADER}\t{FORMAT_VERSION}")?;
        writeln!(out, "family\t{}", self.family)?;
        writeln!(out, "schema\t{}", self.schema_digest)?;
        writeln!(out, "seed\t{}", self.seed)?;
        for (k, v) in &self.params {
            writeln!(out, "param\t{k}\t{v}")?;
        }
        for (k, v) in &self.metrics {
            writeln!(out, "metric\t{k}\t{v}")?;
        }
        match &self.model {
            Model::Linear(fit) => {
                write_encoder(&mut out, &fit.encoder)?;
                writeln!(out, "coding\t{}", fit.coding.as_str())?;
                if let Some(p) = fit.penalty {
                    writeln!(out, "penalty\t{}\t{}", p.lambda, p.alpha)?;
                }
                writeln!(out, "convergence\t{}\t{}", fit.convergence.iterations, fit.convergence.objective)?;
                writeln!(out, "intercept\t{}", fit.intercept)?;
                for b in &fit.coefficients {
                    writeln!(out, "coef\t{b}")?;
                }
            }
            Model::Cart { layout, tree } => {
                write_layout(&mut out, layout)?;
                write_tree(&mut out, 0, tree)?;
            }
            Model::Forest(forest) => {
                write_layout(&mut out, &forest.layout)?;
                for (i, t) in forest.trees.iter().enumerate() {
                    write_tree(&mut out, i, t)?;
                }
            }
            Model::Boost { model, encoder } => {
                write_encoder(&mut out, encoder)?;
                write_layout(&mut out, &model.layout)?;
                writeln!(out, "base_score\t{}", model.base_score)?;
                if let Some(r) = model.stopped_early {
                    writeln!(out, "stopped_early\t{r}")?;
                }
                for (i, t) in model.trees.iter().enumerate() {
                    write_tree(&mut out, i, t)?;
                }
            }
        }
        writeln!(out, "end")?;
        Ok(())
    }

    pub fn read<R: BufRead>(reader: R) -> Result<TrainedModel, ModelError> {
        Reader::default().run(reader)
    }

    pub fn to_text(&self) -> String {
        let mut buf = Vec::new();
        self.write(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("model text is UTF-8")
    }
}

fn write_encoder<W: Write>(out: &mut W, enc: &DesignEncoder) -> std::io::Result<()> {
    for f in &enc.features {
        match f {
            EncodedFeature::Numeric { name } => writeln!(out, "encoder\tnumeric\t{name}")?,
            EncodedFeature::Categorical { name, levels } => {
                writeln!(out, "encoder\tcategorical\t{name}\t{}", levels.join("|"))?
            }
        }
    }
    if let Some(s) = &enc.standardization {
        for j in 0..s.mean.len() {
            writeln!(out, "standardize\t{}\t{}\t{}", s.mean[j], s.sd[j], u8::from(s.constant[j]))?;
        }
    }
    Ok(())
}

fn write_layout<W: Write>(out: &mut W, layout: &FeatureLayout) -> std::io::Result<()> {
    for (name, kind) in layout.names.iter().zip(&layout.kinds) {
        match kind {
            FeatureKind::Numeric => writeln!(out, "feature\t{name}\tnumeric")?,
            FeatureKind::Categorical { levels } => writeln!(out, "feature\t{name}\tcategorical\t{}", levels.join("|"))?,
        }
    }
    Ok(())
}

fn write_tree<W: Write>(out: &mut W, index: usize, tree: &Tree) -> std::io::Result<()> {
    writeln!(out, "tree\t{index}")?;
    for n in &tree.nodes {
        let opt = |v: Option<usize>| v.map_or("-".to_string(), |v| v.to_string());
        let split = match &n.split {
            None => "-".to_string(),
            Some(Split::Numeric { feature, threshold }) => format!("num:{feature}:{threshold}"),
            Some(Split::Categorical { feature, left_levels }) => format!(
                "cat:{feature}:{}",
                left_levels.iter().map(u32::to_string).collect::<Vec<_>>().join("|")
            ),
        };
        writeln!(
            out,
            "node\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}\t{}",
            n.id,
            opt(n.parent),
            split,
            opt(n.children.map(|c| c.0)),
            opt(n.children.map(|c| c.1)),
            n.value,
            n.n,
            n.cover,
            n.impurity,
            n.decrease,
            n.grad,
            n.hess
        )?;
    }
    Ok(())
}

#[derive(Default)]
struct Reader {
    line: usize,
    family: Option<ModelFamily>,
    schema: Option<String>,
    seed: u64,
    params: Vec<(String, String)>,
    metrics: Vec<(String, f64)>,
    encoder: Vec<EncodedFeature>,
    standardize: Vec<(f64, f64, bool)>,
    coding: Option<Coding>,
    penalty: Option<Penalty>,
    convergence: Option<Convergence>,
    intercept: Option<f64>,
    coefficients: Vec<f64>,
    layout: FeatureLayout,
    base_score: Option<f64>,
    stopped_early: Option<usize>,
    trees: Vec<Tree>,
    ended: bool,
}

impl Reader {
    fn err(&self, message: impl Into<String>) -> ModelError {
        ModelError::Format {
            line: self.line,
            message: message.into(),
        }
    }

    fn num<T: FromStr>(&self, s: &str) -> Result<T, ModelError> {
        s.parse().map_err(|_| self.err(format!("cannot parse {s:?}")))
    }

    fn opt_num(&self, s: &str) -> Result<Option<usize>, ModelError> {
        if s == "-" {
            Ok(None)
        } else {
            self.num(s).map(Some)
        }
    }

    fn run<R: BufRead>(mut self, reader: R) -> Result<TrainedModel, ModelError> {
        for line in reader.lines() {
            let line = line?;
            self.line += 1;
            if self.ended {
                if line.trim().is_empty() {
                    continue;
                }
                return Err(self.err("content after end"));
            }
            let fields: Vec<&str> = line.split('\t').collect();
            if self.line == 1 {
                if fields.len() != 2 || fields[0] != FORMAT_HEADER {
                    return Err(self.err("not a model file"));
                }
                let v: u32 = self.num(fields[1])?;
                if v != FORMAT_VERSION {
                    return Err(self.err(format!("unsupported format version {v}")));
                }
                continue;
            }
            self.record(&fields)?;
        }
        if !self.ended {
            return Err(self.err("truncated file (no end line)"));
        }
        self.finish()
    }

    fn record(&mut self, f: &[&str]) -> Result<(), ModelError> {
        let want = |n: usize| -> Result<(), ModelError> {
            if f.len() == n {
                Ok(())
            } else {
                Err(self.err(format!("{} expects {} fields", f[0], n)))
            }
        };
        match f[0] {
            "family" => {
                want(2)?;
                self.family = Some(f[1].parse()?);
            }
            "schema" => {
                want(2)?;
                self.schema = Some(f[1].to_string());
            }
            "seed" => {
                want(2)?;
                self.seed = self.num(f[1])?;
            }
            "param" => {
                want(3)?;
                self.params.push((f[1].to_string(), f[2].to_string()));
            }
            "metric" => {
                want(3)?;
                let v = self.num(f[2])?;
                self.metrics.push((f[1].to_string(), v));
            }
            "encoder" => match f.get(1) {
                Some(&"numeric") => {
                    want(3)?;
                    self.encoder.push(EncodedFeature::Numeric { name: f[2].to_string() });
                }
                Some(&"categorical") => {
                    want(4)?;
                    self.encoder.push(EncodedFeature::Categorical {
                        name: f[2].to_string(),
                        levels: f[3].split('|').map(String::from).collect(),
                    });
                }
                _ => return Err(self.err("unknown encoder kind")),
            },
            "standardize" => {
                want(4)?;
                let entry = (self.num(f[1])?, self.num(f[2])?, f[3] == "1");
                self.standardize.push(entry);
            }
            "coding" => {
                want(2)?;
                self.coding = Some(match f[1] {
                    "reference" => Coding::Reference,
                    "full_one_hot" => Coding::FullOneHot,
                    _ => return Err(self.err("unknown coding")),
                });
            }
            "penalty" => {
                want(3)?;
                self.penalty = Some(Penalty {
                    lambda: self.num(f[1])?,
                    alpha: self.num(f[2])?,
                });
            }
            "convergence" => {
                want(3)?;
                self.convergence = Some(Convergence {
                    iterations: self.num(f[1])?,
                    objective: self.num(f[2])?,
                });
            }
            "intercept" => {
                want(2)?;
                self.intercept = Some(self.num(f[1])?);
            }
            "coef" => {
                want(2)?;
                let v = self.num(f[1])?;
                self.coefficients.push(v);
            }
            "feature" => {
                let kind = match f.get(2) {
                    Some(&"numeric") => {
                        want(3)?;
                        FeatureKind::Numeric
                    }
                    Some(&"categorical") => {
                        want(4)?;
                        FeatureKind::Categorical {
                            levels: f[3].split('|').map(String::from).collect(),
                        }
                    }
                    _ => return Err(self.err("unknown feature kind")),
                };
                self.layout.names.push(f[1].to_string());
                self.layout.kinds.push(kind);
            }
            "base_score" => {
                want(2)?;
                self.base_score = Some(self.num(f[1])?);
            }
            "stopped_early" => {
                want(2)?;
                self.stopped_early = Some(self.num(f[1])?);
            }
            "tree" => {
                want(2)?;
                let i: usize = self.num(f[1])?;
                if i != self.trees.len() {
                    return Err(self.err("trees out of order"));
                }
                self.trees.push(Tree { nodes: Vec::new() });
            }
            "node" => {
                want(13)?;
                let node = self.node(f)?;
                let tree = self.trees.last_mut().ok_or_else(|| ModelError::Format {
                    line: self.line,
                    message: "node before tree".into(),
                })?;
                if node.id != tree.nodes.len() {
                    return Err(self.err("nodes out of order"));
                }
                tree.nodes.push(node);
            }
            "end" => {
                want(1)?;
                self.ended = true;
            }
            other => return Err(self.err(format!("unknown record {other:?}"))),
        }
        Ok(())
    }

    fn node(&self, f: &[&str]) -> Result<Node, ModelError> {
        let split = if f[3] == "-" {
            None
        } else {
            let parts: Vec<&str> = f[3].splitn(3, ':').collect();
            if parts.len() != 3 {
                return Err(self.err("malformed split"));
            }
            let feature: usize = self.num(parts[1])?;
            if feature >= self.layout.len() {
                return Err(self.err("split on unknown feature"));
            }
            Some(match parts[0] {
                "num" => Split::Numeric {
                    feature,
                    threshold: self.num(parts[2])?,
                },
                "cat" => Split::Categorical {
                    feature,
                    left_levels: parts[2].split('|').map(|s| self.num(s)).collect::<Result<_, _>>()?,
                },
                _ => return Err(self.err("unknown split kind")),
            })
        };
        let children = match (self.opt_num(f[4])?, self.opt_num(f[5])?) {
            (Some(l), Some(r)) => Some((l, r)),
            (None, None) => None,
            _ => return Err(self.err("node with one child")),
        };
        if split.is_some() != children.is_some() {
            return Err(self.err("split and children disagree"));
        }
        Ok(Node {
            id: self.num(f[1])?,
            parent: self.opt_num(f[2])?,
            split,
            children,
            value: self.num(f[6])?,
            n: self.num(f[7])?,
            cover: self.num(f[8])?,
            impurity: self.num(f[9])?,
            decrease: self.num(f[10])?,
            grad: self.num(f[11])?,
            hess: self.num(f[12])?,
        })
    }

    fn encoder(&self) -> DesignEncoder {
        let standardization = (!self.standardize.is_empty()).then(|| Standardization {
            mean: self.standardize.iter().map(|s| s.0).collect(),
            sd: self.standardize.iter().map(|s| s.1).collect(),
            constant: self.standardize.iter().map(|s| s.2).collect(),
        });
        DesignEncoder {
            features: self.encoder.clone(),
            standardization,
        }
    }

    fn finish(self) -> Result<TrainedModel, ModelError> {
        let family = self.family.ok_or_else(|| self.err("missing family"))?;
        let schema_digest = self.schema.clone().ok_or_else(|| self.err("missing schema"))?;
        let check_trees = |trees: &[Tree]| -> Result<(), ModelError> {
            for t in trees {
                if t.nodes.is_empty() || t.nodes.iter().any(|n| n.children.is_some_and(|(l, r)| l >= t.nodes.len() || r >= t.nodes.len())) {
                    return Err(self.err("tree with dangling nodes"));
                }
            }
            Ok(())
        };
        check_trees(&self.trees)?;
        let model = match family {
            ModelFamily::Logit | ModelFamily::Elanet => {
                let encoder = self.encoder();
                if encoder.width() != self.coefficients.len() {
                    return Err(self.err("coefficient count differs from the encoded width"));
                }
                Model::Linear(LinearFit {
                    intercept: self.intercept.ok_or_else(|| self.err("missing intercept"))?,
                    coefficients: self.coefficients.clone(),
                    provenance: encoder.provenance(),
                    penalty: self.penalty,
                    coding: self.coding.ok_or_else(|| self.err("missing coding"))?,
                    convergence: self.convergence.clone().ok_or_else(|| self.err("missing convergence"))?,
                    encoder,
                })
            }
            ModelFamily::Cart => {
                if self.trees.len() != 1 {
                    return Err(self.err("a tree model holds exactly one tree"));
                }
                Model::Cart {
                    layout: self.layout.clone(),
                    tree: self.trees[0].clone(),
                }
            }
            ModelFamily::Rf => {
                let (spec, _) = ModelSpec::from_params(family, &self.params, self.seed)?;
                let ModelSpec::Rf(params) = spec else { unreachable!() };
                Model::Forest(Forest {
                    layout: self.layout.clone(),
                    params,
                    trees: self.trees.clone(),
                })
            }
            ModelFamily::Xgb => {
                let (spec, _) = ModelSpec::from_params(family, &self.params, self.seed)?;
                let ModelSpec::Xgb(params) = spec else { unreachable!() };
                Model::Boost {
                    model: BoostModel {
                        layout: self.layout.clone(),
                        params,
                        base_score: self.base_score.ok_or_else(|| self.err("missing base score"))?,
                        trees: self.trees.clone(),
                        stopped_early: self.stopped_early,
                    },
                    encoder: self.encoder(),
                }
            }
        };
        Ok(TrainedModel {
            family,
            params: self.params,
            seed: self.seed,
            schema_digest,
            metrics: self.metrics,
            model,
        })
    }
}
