use std::path::{Path, PathBuf};

use mbidx_core::datagen::CharacteristicSpec;
use mbidx_core::eval::Scenario;
use mbidx_core::{Error, Protocol, Result, Scheme, SchemeConfig, Strategy, SynthSpec, TPolicy};
use serde::Deserialize;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DataFormat {
    #[default]
    Csv,
    Bin,
}

/// Everything a run needs. Every section is optional in the file.
#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// Feeds data generation, scheme keys and the evaluation protocol.
    pub seed: u64,
    pub dataset: Option<PathBuf>,
    pub protected: Option<PathBuf>,
    pub output: PathBuf,
    pub synth: SynthSection,
    pub scheme: SchemeSection,
    pub index: IndexSection,
    pub protocol: ProtocolSection,
    pub bench: BenchSection,
    pub search: SearchSection,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 0,
            dataset: None,
            protected: None,
            output: PathBuf::from("mbidx-out"),
            synth: SynthSection::default(),
            scheme: SchemeSection::default(),
            index: IndexSection::default(),
            protocol: ProtocolSection::default(),
            bench: BenchSection::default(),
            search: SearchSection::default(),
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SynthSection {
    pub identities: usize,
    pub format: DataFormat,
    pub characteristics: Vec<CharacteristicSpec>,
}

impl Default for SynthSection {
    fn default() -> Self {
        let profile = SynthSpec::default_profile(0);
        SynthSection {
            identities: profile.n_identities,
            format: DataFormat::Csv,
            characteristics: profile.characteristics,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SchemeSection {
    pub name: Scheme,
    pub length: usize,
    pub slots: usize,
    pub projections: usize,
}

impl Default for SchemeSection {
    fn default() -> Self {
        let d = SchemeConfig::new(Scheme::BioHashing, 0);
        SchemeSection {
            name: d.scheme,
            length: d.length,
            slots: d.slots,
            projections: d.projections,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IndexSection {
    pub strategy: Strategy,
    pub k: u32,
    /// Characteristic order; all of the dataset's characteristics when absent.
    pub characteristics: Option<Vec<String>>,
}

impl Default for IndexSection {
    fn default() -> Self {
        IndexSection {
            strategy: Strategy::FeatureConcat,
            k: 5,
            characteristics: None,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ProtocolSection {
    pub folds: usize,
    pub calibration_identities: usize,
    pub open_set_split: f64,
    /// Fixed number of bins for open-set runs; derived from the closed-set run when absent.
    pub t: Option<usize>,
    pub k_range: Vec<u32>,
    pub empty_bins_consume_visit: bool,
}

impl Default for ProtocolSection {
    fn default() -> Self {
        let p = Protocol::default();
        ProtocolSection {
            folds: p.folds,
            calibration_identities: p.calibration_identities,
            open_set_split: p.open_set_split,
            t: None,
            k_range: p.k_range,
            empty_bins_consume_visit: p.empty_bins_consume_visit,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct BenchSection {
    pub scenarios: Vec<Scenario>,
    pub strategies: Vec<Strategy>,
    /// Also run an unbinned baseline.
    pub exhaustive: bool,
    /// Also run every characteristic on its own.
    pub singles: bool,
}

impl Default for BenchSection {
    fn default() -> Self {
        BenchSection {
            scenarios: vec![Scenario::ClosedSet, Scenario::OpenSet],
            strategies: Strategy::ALL.to_vec(),
            exhaustive: true,
            singles: false,
        }
    }
}

#[derive(Clone, Debug, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSection {
    /// Sample enrolled by `index`.
    pub enrol_sample: usize,
    /// Sample used as the probe by `search`.
    pub probe_sample: usize,
    pub t: Option<usize>,
    pub top: usize,
}

impl Default for SearchSection {
    fn default() -> Self {
        SearchSection {
            enrol_sample: 0,
            probe_sample: 1,
            t: None,
            top: 10,
        }
    }
}

/// Flags shared by every subcommand; each one wins over the config file.
#[derive(Clone, Debug, Default, clap::Args)]
pub struct Overrides {
    /// TOML run configuration
    #[arg(long, short, global = true)]
    pub config: Option<PathBuf>,
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Embedding dataset (.csv, or .bin with a .json manifest)
    #[arg(long, global = true)]
    pub dataset: Option<PathBuf>,
    /// Protected template file written by `protect`
    #[arg(long, global = true)]
    pub protected: Option<PathBuf>,
    #[arg(long, short, global = true)]
    pub output: Option<PathBuf>,
    #[arg(long, global = true)]
    pub scheme: Option<Scheme>,
    #[arg(long, global = true)]
    pub strategy: Option<Strategy>,
    #[arg(long, short, global = true)]
    pub k: Option<u32>,
    #[arg(long, global = true, value_delimiter = ',')]
    pub k_range: Option<Vec<u32>>,
    #[arg(long, short, global = true)]
    pub t: Option<usize>,
    #[arg(long, global = true)]
    pub folds: Option<usize>,
    #[arg(long, global = true)]
    pub identities: Option<usize>,
    #[arg(long, global = true, value_enum)]
    pub format: Option<DataFormat>,
    /// Characteristic order, comma separated
    #[arg(long, global = true, value_delimiter = ',')]
    pub characteristics: Option<Vec<String>>,
}

impl RunConfig {
    pub fn parse(text: &str, origin: &Path) -> Result<Self> {
        toml::from_str(text)
            .map_err(|e| Error::Config(format!("{}: {}", origin.display(), e.message())))
    }

    pub fn load(o: &Overrides) -> Result<Self> {
        let mut c = match &o.config {
            Some(path) => {
                let text = std::fs::read_to_string(path)
                    .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
                Self::parse(&text, path)?
            }
            None => RunConfig::default(),
        };
        c.apply(o);
        c.validate()?;
        Ok(c)
    }

    pub fn apply(&mut self, o: &Overrides) {
        if let Some(v) = o.seed {
            self.seed = v;
        }
        if let Some(v) = &o.dataset {
            self.dataset = Some(v.clone());
        }
        if let Some(v) = &o.protected {
            self.protected = Some(v.clone());
        }
        if let Some(v) = &o.output {
            self.output = v.clone();
        }
        if let Some(v) = o.scheme {
            self.scheme.name = v;
        }
        if let Some(v) = o.strategy {
            self.index.strategy = v;
        }
        if let Some(v) = o.k {
            self.index.k = v;
        }
        if let Some(v) = &o.k_range {
            self.protocol.k_range = v.clone();
        }
        if let Some(v) = o.t {
            self.protocol.t = Some(v);
            self.search.t = Some(v);
        }
        if let Some(v) = o.folds {
            self.protocol.folds = v;
        }
        if let Some(v) = o.identities {
            self.synth.identities = v;
        }
        if let Some(v) = o.format {
            self.synth.format = v;
        }
        if let Some(v) = &o.characteristics {
            self.index.characteristics = Some(v.clone());
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.synth_spec().validate()?;
        self.scheme_config().validate()?;
        self.protocol().validate()?;
        mbidx_core::bits::Pattern::zero(self.index.k).map_err(|e| Error::Config(e.to_string()))?;
        if self.search.top == 0 {
            return Err(Error::Config("search.top must be positive".into()));
        }
        if self.search.enrol_sample == self.search.probe_sample {
            return Err(Error::Config(
                "search.enrol_sample and search.probe_sample must differ".into(),
            ));
        }
        Ok(())
    }

    pub fn synth_spec(&self) -> SynthSpec {
        SynthSpec {
            n_identities: self.synth.identities,
            characteristics: self.synth.characteristics.clone(),
            seed: self.seed,
        }
    }

    pub fn scheme_config(&self) -> SchemeConfig {
        SchemeConfig {
            scheme: self.scheme.name,
            seed: self.seed,
            length: self.scheme.length,
            slots: self.scheme.slots,
            projections: self.scheme.projections,
        }
    }

    pub fn protocol(&self) -> Protocol {
        let p = &self.protocol;
        Protocol {
            folds: p.folds,
            seed: self.seed,
            calibration_identities: p.calibration_identities,
            open_set_split: p.open_set_split,
            t_policy: match p.t {
                Some(t) => TPolicy::Fixed { t },
                None => TPolicy::ClosedSetDerived,
            },
            k_range: p.k_range.clone(),
            empty_bins_consume_visit: p.empty_bins_consume_visit,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_is_the_default() {
        let c = RunConfig::parse("", Path::new("x.toml")).unwrap();
        assert_eq!(c.index.k, 5);
        assert_eq!(c.synth.characteristics.len(), 3);
        c.validate().unwrap();
    }

    #[test]
    fn unknown_keys_are_rejected() {
        for text in ["sed = 3", "[index]\nkk = 4", "[synth]\nformat = \"xml\""] {
            assert!(matches!(
                RunConfig::parse(text, Path::new("x.toml")),
                Err(Error::Config(_))
            ));
        }
    }

    #[test]
    fn flags_win_over_file() {
        let mut c = RunConfig::parse(
            "seed = 3\n[index]\nstrategy = \"xor-codes\"\nk = 4\n[scheme]\nname = \"iom-grp\"\n",
            Path::new("x.toml"),
        )
        .unwrap();
        assert_eq!(c.index.strategy, Strategy::XorCodes);
        c.apply(&Overrides {
            seed: Some(9),
            k: Some(7),
            ..Overrides::default()
        });
        assert_eq!((c.seed, c.index.k), (9, 7));
        assert_eq!(c.scheme_config().seed, 9);
        assert_eq!(c.scheme.name, Scheme::IomGrp);
    }

    #[test]
    fn invalid_values_fail_validation() {
        let bad = [
            "[[synth.characteristics]]\nname = \"face\"\ndim = 16\nsigma = -1.0\n",
            "[index]\nk = 0",
            "[protocol]\nfolds = 1",
            "[scheme]\nname = \"iom-grp\"\nprojections = 12",
        ];
        for text in bad {
            let c = RunConfig::parse(text, Path::new("x.toml")).unwrap();
            assert!(matches!(c.validate(), Err(Error::Config(_))), "{text}");
        }
    }
}
