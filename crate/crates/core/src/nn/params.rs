//! Named parameter storage shared by generators and discriminators.

use candle_core::{DType, Device, Tensor, Var};

use crate::error::{Error, Result};
use crate::rng::SeededRng;

#[derive(Debug, Clone)]
pub struct Param {
    pub name: String,
    pub var: Var,
    /// Running statistics are stored here as non-trainable entries.
    pub trainable: bool,
}

/// Ordered set of named parameters. Cloning a [`Var`] aliases its storage,
/// which is how two networks come to share a block.
#[derive(Debug, Clone, Default)]
pub struct ParamStore {
    params: Vec<Param>,
}

impl ParamStore {
    pub fn iter(&self) -> impl Iterator<Item = &Param> {
        self.params.iter()
    }

    pub fn get(&self, name: &str) -> Option<&Var> {
        self.params.iter().find(|p| p.name == name).map(|p| &p.var)
    }

    pub fn trainable(&self) -> impl Iterator<Item = &Param> {
        self.params.iter().filter(|p| p.trainable)
    }

    pub fn trainable_count(&self) -> usize {
        self.trainable().map(|p| p.var.elem_count()).sum()
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    fn push(&mut self, name: String, var: Var, trainable: bool) -> Result<()> {
        if self.get(&name).is_some() {
            return Err(Error::InvalidConfig(format!(
                "duplicate parameter `{name}`"
            )));
        }
        self.params.push(Param {
            name,
            var,
            trainable,
        });
        Ok(())
    }

    /// Overwrites every parameter named in `tensors` after a shape check.
    pub fn assign(&self, name: &str, value: &Tensor) -> Result<()> {
        let var = self
            .get(name)
            .ok_or_else(|| Error::Checkpoint(format!("unknown parameter `{name}`")))?;
        if var.dims() != value.dims() {
            return Err(Error::Checkpoint(format!(
                "parameter `{name}` has shape {:?}, checkpoint holds {:?}",
                var.dims(),
                value.dims()
            )));
        }
        var.set(&value.to_dtype(var.dtype())?)?;
        Ok(())
    }

    /// Largest absolute element of any trainable parameter; `NaN` if any is non-finite.
    pub fn max_abs(&self) -> Result<f64> {
        let mut m = 0f64;
        for p in self.trainable() {
            let v = p
                .var
                .as_tensor()
                .abs()?
                .max_all()?
                .to_dtype(DType::F64)?
                .to_scalar::<f64>()?;
            if !v.is_finite() {
                return Ok(f64::NAN);
            }
            m = m.max(v);
        }
        Ok(m)
    }
}

/// How a freshly built parameter gets its initial value.
#[derive(Debug, Clone, Copy)]
pub enum Init {
    /// Zero-mean Gaussian with the given std.
    Normal(f64),
    Constant(f64),
    /// Gaussian around `mean`, for norm scales.
    NormalAround {
        mean: f64,
        std: f64,
    },
}

/// A store to alias from, and which parameter names to take from it.
type Reuse<'a> = (&'a ParamStore, &'a dyn Fn(&str) -> bool);

/// Creates parameters under a name prefix, optionally reusing the storage of
/// another store for names the `reuse` predicate accepts.
pub struct ParamBuilder<'a> {
    store: ParamStore,
    rng: &'a mut SeededRng,
    dtype: DType,
    reuse: Option<Reuse<'a>>,
}

impl<'a> ParamBuilder<'a> {
    pub fn new(rng: &'a mut SeededRng, dtype: DType) -> Self {
        Self {
            store: ParamStore::default(),
            rng,
            dtype,
            reuse: None,
        }
    }

    pub fn sharing_with(mut self, other: &'a ParamStore, shared: &'a dyn Fn(&str) -> bool) -> Self {
        self.reuse = Some((other, shared));
        self
    }

    pub fn dtype(&self) -> DType {
        self.dtype
    }

    pub fn param(&mut self, name: &str, shape: &[usize], init: Init) -> Result<Var> {
        self.build(name, shape, init, true)
    }

    pub fn buffer(&mut self, name: &str, shape: &[usize], value: f64) -> Result<Var> {
        self.build(name, shape, Init::Constant(value), false)
    }

    fn build(&mut self, name: &str, shape: &[usize], init: Init, trainable: bool) -> Result<Var> {
        if let Some((other, shared)) = self.reuse {
            if shared(name) {
                let var = other
                    .get(name)
                    .ok_or_else(|| {
                        Error::InvalidConfig(format!(
                            "shared parameter `{name}` missing from source"
                        ))
                    })?
                    .clone();
                if var.dims() != shape {
                    return Err(Error::InvalidConfig(format!(
                        "shared parameter `{name}` has mismatched shape"
                    )));
                }
                self.store.push(name.to_string(), var.clone(), trainable)?;
                return Ok(var);
            }
        }
        let n: usize = shape.iter().product();
        let values = match init {
            Init::Normal(std) => self.rng.gaussian_vec(n, 0.0, std),
            Init::NormalAround { mean, std } => self.rng.gaussian_vec(n, mean, std),
            Init::Constant(c) => vec![c; n],
        };
        let t = Tensor::from_vec(values, shape, &Device::Cpu)?.to_dtype(self.dtype)?;
        let var = Var::from_tensor(&t)?;
        self.store.push(name.to_string(), var.clone(), trainable)?;
        Ok(var)
    }

    pub fn finish(self) -> ParamStore {
        self.store
    }
}
