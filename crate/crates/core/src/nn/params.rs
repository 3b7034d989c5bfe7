use indexmap::IndexMap;

use super::{graph::Gradients, NnError, Result, Tensor};

/// Ordered, name-addressed parameter set. Insertion order is the iteration
/// order everywhere (optimizer state, checkpoints, gradient norms).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ParamStore {
    params: IndexMap<String, Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Result<usize> {
        let name = name.into();
        if self.params.contains_key(&name) {
            return Err(NnError::DuplicateParam(name));
        }
        let (idx, _) = self.params.insert_full(name, tensor);
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Tensor::numel).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.params.get_mut(name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.get_index_of(name)
    }

    pub fn name_at(&self, idx: usize) -> &str {
        self.params.get_index(idx).map(|(k, _)| k.as_str()).unwrap_or("")
    }

    pub fn at(&self, idx: usize) -> &Tensor {
        &self.params[idx]
    }

    pub fn at_mut(&mut self, idx: usize) -> &mut Tensor {
        &mut self.params[idx]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    /// Replaces every parameter's gradient with the one in `grads` (zeros for
    /// parameters the loss does not depend on).
    pub fn set_grads(&mut self, grads: Gradients) -> Result<()> {
        let mut grads = grads.into_vec();
        grads.resize(self.params.len(), None);
        for (t, g) in self.params.values_mut().zip(grads) {
            let n = t.numel();
            t.set_grad(Some(g.unwrap_or_else(|| vec![0.0; n])))?;
        }
        Ok(())
    }

    pub fn zero_grads(&mut self) {
        for t in self.params.values_mut() {
            let n = t.numel();
            // shape always matches
            let _ = t.set_grad(Some(vec![0.0; n]));
        }
    }

    /// Global L2 norm over all present gradients, accumulated in f64 in
    /// parameter order.
    pub fn grad_norm(&self) -> f32 {
        let ss: f64 = self
            .params
            .values()
            .filter_map(|t| t.grad())
            .flat_map(|g| g.iter())
            .map(|&x| (x as f64) * (x as f64))
            .sum();
        ss.sqrt() as f32
    }

    /// Scales gradients so their global norm is at most `max_norm`; returns
    /// the norm before clipping.
    pub fn clip_grad_norm(&mut self, max_norm: f32) -> f32 {
        let norm = self.grad_norm();
        if norm > max_norm && norm > 0.0 {
            let s = max_norm / norm;
            for t in self.params.values_mut() {
                if let Some(g) = t.grad() {
                    let scaled: Vec<f32> = g.iter().map(|x| x * s).collect();
                    let _ = t.set_grad(Some(scaled));
                }
            }
        }
        norm
    }

    pub fn is_finite(&self) -> bool {
        self.params.values().all(Tensor::is_finite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn names_unique_and_ordered() {
        let mut s = ParamStore::new();
        s.insert("b", Tensor::zeros(vec![2])).unwrap();
        s.insert("a", Tensor::zeros(vec![3])).unwrap();
        assert!(matches!(
            s.insert("a", Tensor::zeros(vec![1])),
            Err(NnError::DuplicateParam(_))
        ));
        assert_eq!(s.names().collect::<Vec<_>>(), vec!["b", "a"]);
        assert_eq!(s.num_scalars(), 5);
    }

    #[test]
    fn clip_scales_to_max() {
        let mut s = ParamStore::new();
        s.insert("w", Tensor::zeros(vec![2])).unwrap();
        s.at_mut(0).set_grad(Some(vec![3.0, 4.0])).unwrap();
        let n = s.clip_grad_norm(1.0);
        assert_eq!(n, 5.0);
        let g = s.at(0).grad().unwrap();
        assert!((g[0] - 0.6).abs() < 1e-6 && (g[1] - 0.8).abs() < 1e-6);
    }
}
