//! Registry construction and taped forward helpers shared by both networks.

use rand_chacha::ChaCha8Rng;

use crate::error::Result;
use crate::nn::init::{bilinear_deconv_init, msra_init};
use crate::nn::{Bindings, ParamRegistry, Role};
use crate::ops::norm::DEFAULT_EPS;
use crate::ops::Mode;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Which of the two sizes a network is built at.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum Preset {
    Full,
    Mini,
}

impl Preset {
    pub fn name(self) -> &'static str {
        match self {
            Preset::Full => "full",
            Preset::Mini => "mini",
        }
    }
}

impl std::str::FromStr for Preset {
    type Err = crate::Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "full" => Ok(Preset::Full),
            "mini" => Ok(Preset::Mini),
            other => Err(crate::Error::invalid(format!("unknown preset `{other}` (expected full or mini)"))),
        }
    }
}

pub(crate) struct Builder<'a, T> {
    pub reg: &'a mut ParamRegistry<T>,
    pub rng: ChaCha8Rng,
}

impl<T: Scalar> Builder<'_, T> {
    pub fn conv(&mut self, prefix: &str, c_out: usize, c_in: usize, k: usize, bias: bool) -> Result<()> {
        let w = msra_init(&[c_out, c_in, k, k], &mut self.rng)?;
        self.reg.insert(format!("{prefix}/weight"), w, Role::Weight)?;
        if bias {
            self.reg.insert(format!("{prefix}/bias"), Tensor::zeros(&[c_out])?, Role::Bias)?;
        }
        Ok(())
    }

    pub fn batchnorm(&mut self, prefix: &str, c: usize) -> Result<()> {
        self.reg.insert(format!("{prefix}/gamma"), Tensor::full(&[c], T::one())?, Role::BnGamma)?;
        self.reg.insert(format!("{prefix}/beta"), Tensor::zeros(&[c])?, Role::BnBeta)?;
        self.reg.insert(format!("{prefix}/running_mean"), Tensor::zeros(&[c])?, Role::BnRunning)?;
        self.reg.insert(format!("{prefix}/running_var"), Tensor::full(&[c], T::one())?, Role::BnRunning)?;
        Ok(())
    }

    pub fn inner_product(&mut self, prefix: &str, units: usize, features: usize) -> Result<()> {
        let w = msra_init(&[units, features], &mut self.rng)?;
        self.reg.insert(format!("{prefix}/weight"), w, Role::Weight)?;
        self.reg.insert(format!("{prefix}/bias"), Tensor::zeros(&[units])?, Role::Bias)?;
        Ok(())
    }

    pub fn deconv_bilinear(&mut self, prefix: &str, channels: usize, factor: usize) -> Result<()> {
        self.reg.insert(format!("{prefix}/weight"), bilinear_deconv_init(channels, factor)?, Role::Weight)
    }
}

/// Forward context: the tape, the registry (for batch-norm moving averages)
/// and the tape variables bound to trainable parameters.
pub(crate) struct Ctx<'a, T> {
    pub tape: &'a mut Tape<T>,
    pub reg: &'a mut ParamRegistry<T>,
    pub vars: &'a Bindings,
    pub mode: Mode,
}

impl<T: Scalar> Ctx<'_, T> {
    fn var(&self, name: String) -> Result<Var> {
        self.vars.var(&name)
    }

    pub fn conv(&mut self, prefix: &str, x: Var, stride: usize, pad: usize) -> Result<Var> {
        let w = self.var(format!("{prefix}/weight"))?;
        let bias_name = format!("{prefix}/bias");
        let b = if self.reg.contains(&bias_name) { Some(self.var(bias_name)?) } else { None };
        self.tape.conv2d(x, w, b, stride, pad)
    }

    pub fn batchnorm(&mut self, prefix: &str, x: Var) -> Result<Var> {
        let g = self.var(format!("{prefix}/gamma"))?;
        let b = self.var(format!("{prefix}/beta"))?;
        let mut stats = self.reg.running_stats(prefix)?;
        let y = self.tape.batchnorm2d(x, g, b, &mut stats, self.mode, T::lit(DEFAULT_EPS))?;
        if self.mode == Mode::Train {
            self.reg.store_running_stats(prefix, stats)?;
        }
        Ok(y)
    }

    /// conv → batch norm → ReLU
    pub fn conv_bn_relu(&mut self, prefix: &str, x: Var, stride: usize, pad: usize) -> Result<Var> {
        let y = self.conv(prefix, x, stride, pad)?;
        let y = self.batchnorm(&format!("{prefix}/bn"), y)?;
        self.tape.relu(y)
    }

    pub fn deconv(&mut self, prefix: &str, x: Var, stride: usize, pad: usize) -> Result<Var> {
        let w = self.var(format!("{prefix}/weight"))?;
        self.tape.conv_transpose2d(x, w, stride, pad)
    }

    pub fn inner_product(&mut self, prefix: &str, x: Var) -> Result<Var> {
        let w = self.var(format!("{prefix}/weight"))?;
        let b = self.var(format!("{prefix}/bias"))?;
        self.tape.inner_product(x, w, Some(b))
    }
}
