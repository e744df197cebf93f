use crate::registry::{Abstraction, BuildContext, ConfigurationError, Params, RegistrationError, Registry};
use crate::tensor::ParamStore;

/// Updates parameters in place from their accumulated gradients.
pub trait Optimizer: Send {
    fn step(&mut self, store: &mut ParamStore);
}

impl Abstraction for dyn Optimizer {
    const NAME: &'static str = "optimizer";
}

/// Plain gradient descent: `w -= lr * g`.
#[derive(Debug, Clone)]
pub struct Sgd {
    pub lr: f64,
}

impl Optimizer for Sgd {
    fn step(&mut self, store: &mut ParamStore) {
        for id in store.ids().collect::<Vec<_>>() {
            let (value, grad) = store.value_and_grad_mut(id);
            for (w, g) in value.data_mut().iter_mut().zip(grad.data()) {
                *w -= self.lr * g;
            }
        }
    }
}

/// Adam with bias-corrected moment estimates.
#[derive(Debug, Clone)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    step: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64, beta1: f64, beta2: f64, eps: f64) -> Self {
        Adam { lr, beta1, beta2, eps, step: 0, m: Vec::new(), v: Vec::new() }
    }
}

impl Optimizer for Adam {
    fn step(&mut self, store: &mut ParamStore) {
        self.step += 1;
        let c1 = 1.0 - self.beta1.powi(self.step);
        let c2 = 1.0 - self.beta2.powi(self.step);
        for id in store.ids().collect::<Vec<_>>() {
            let i = id.index();
            let (value, grad) = store.value_and_grad_mut(id);
            if self.m.len() <= i {
                self.m.resize(i + 1, Vec::new());
                self.v.resize(i + 1, Vec::new());
            }
            if self.m[i].len() != grad.numel() {
                self.m[i] = vec![0.0; grad.numel()];
                self.v[i] = vec![0.0; grad.numel()];
            }
            let (m, v) = (&mut self.m[i], &mut self.v[i]);
            for (k, (w, g)) in value.data_mut().iter_mut().zip(grad.data()).enumerate() {
                m[k] = self.beta1 * m[k] + (1.0 - self.beta1) * g;
                v[k] = self.beta2 * v[k] + (1.0 - self.beta2) * g * g;
                *w -= self.lr * (m[k] / c1) / ((v[k] / c2).sqrt() + self.eps);
            }
        }
    }
}

fn learning_rate(params: &mut Params) -> Result<f64, ConfigurationError> {
    let lr = params.pop_float("lr", None)?;
    if lr.is_nan() || lr <= 0.0 {
        return Err(params.error("lr", format!("must be positive, got {lr}")));
    }
    Ok(lr)
}

fn unit_interval(params: &mut Params, key: &str, default: f64) -> Result<f64, ConfigurationError> {
    let x = params.pop_float(key, Some(default))?;
    if !(0.0..1.0).contains(&x) {
        return Err(params.error(key, format!("must be in [0, 1), got {x}")));
    }
    Ok(x)
}

fn sgd(params: &mut Params, _: &mut BuildContext<'_>) -> Result<Box<dyn Optimizer>, ConfigurationError> {
    Ok(Box::new(Sgd { lr: learning_rate(params)? }))
}

fn adam(params: &mut Params, _: &mut BuildContext<'_>) -> Result<Box<dyn Optimizer>, ConfigurationError> {
    let lr = learning_rate(params)?;
    let beta1 = unit_interval(params, "beta1", 0.9)?;
    let beta2 = unit_interval(params, "beta2", 0.999)?;
    let eps = params.pop_float("eps", Some(1e-8))?;
    if eps.is_nan() || eps <= 0.0 {
        return Err(params.error("eps", format!("must be positive, got {eps}")));
    }
    Ok(Box::new(Adam::new(lr, beta1, beta2, eps)))
}

pub(super) fn register(registry: &mut Registry) -> Result<(), RegistrationError> {
    registry.register::<dyn Optimizer>("sgd", sgd)?;
    registry.register::<dyn Optimizer>("adam", adam)
}
