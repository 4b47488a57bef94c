use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::imaging::Scale;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Family {
    TranslatorGen,
    PatchDisc,
    Dsn,
    Srn,
}

impl Family {
    pub const ALL: [Family; 4] = [
        Family::TranslatorGen,
        Family::PatchDisc,
        Family::Dsn,
        Family::Srn,
    ];

    pub fn tag(self) -> u8 {
        match self {
            Family::TranslatorGen => 0,
            Family::PatchDisc => 1,
            Family::Dsn => 2,
            Family::Srn => 3,
        }
    }

    pub fn from_tag(tag: u8) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.tag() == tag)
    }

    pub fn name(self) -> &'static str {
        match self {
            Family::TranslatorGen => "translator_gen",
            Family::PatchDisc => "patch_disc",
            Family::Dsn => "dsn",
            Family::Srn => "srn",
        }
    }

    /// Spatial scale of output over input. The patch discriminator reduces
    /// by 8 to a single channel.
    pub fn scale_factor(self) -> Scale {
        match self {
            Family::TranslatorGen => Scale::ONE,
            Family::PatchDisc => Scale::new(1, 8).expect("constant scale"),
            Family::Dsn => Scale::QUARTER,
            Family::Srn => Scale::FOUR,
        }
    }

    /// Input sides must be multiples of this.
    pub fn input_multiple(self) -> usize {
        match self {
            Family::TranslatorGen | Family::Dsn => 4,
            Family::PatchDisc => 8,
            Family::Srn => 1,
        }
    }
}

impl fmt::Display for Family {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Family::ALL
            .into_iter()
            .find(|f| f.name() == s)
            .ok_or_else(|| Error::Version(format!("unknown network family `{s}`")))
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct NetworkSpec {
    pub family: Family,
    pub base_channels: usize,
    pub residual_blocks: usize,
}

impl NetworkSpec {
    pub fn new(family: Family, base_channels: usize, residual_blocks: usize) -> Result<Self> {
        let spec = NetworkSpec {
            family,
            base_channels,
            residual_blocks,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.base_channels == 0 {
            return Err(Error::dim(format!("{}: base_channels must be positive", self.family)));
        }
        Ok(())
    }

    pub fn scale_factor(&self) -> Scale {
        self.family.scale_factor()
    }

    /// Smallest configuration of a family, used for gradient checks.
    pub fn minimal(family: Family) -> NetworkSpec {
        NetworkSpec {
            family,
            base_channels: 2,
            residual_blocks: 1,
        }
    }

    /// Output shape for an N×3×H×W input.
    pub fn output_shape(&self, input: &[usize]) -> Result<[usize; 4]> {
        let [n, c, h, w] = match input {
            &[n, c, h, w] => [n, c, h, w],
            _ => return Err(Error::dim(format!("expected N×3×H×W input, got {input:?}"))),
        };
        let m = self.family.input_multiple();
        if c != 3 || h == 0 || w == 0 || h % m != 0 || w % m != 0 {
            return Err(Error::dim(format!(
                "{} needs 3 channels and sides divisible by {m}, got {input:?}",
                self.family
            )));
        }
        let s = self.scale_factor();
        let out_c = if self.family == Family::PatchDisc { 1 } else { 3 };
        Ok([n, out_c, s.apply(h)?, s.apply(w)?])
    }
}
