use crate::tensor::{Tape, Tensor, Var};

/// A container of named parameter tensors.
///
/// `named_params` and `named_params_mut` must list parameters in the same
/// order the container binds them through a [`ParamBinder`]; the optimizer and
/// checkpoint code rely on that order.
pub trait Parameterized {
    fn named_params(&self) -> Vec<(String, &Tensor)>;
    fn named_params_mut(&mut self) -> Vec<(String, &mut Tensor)>;

    fn param_count(&self) -> usize {
        self.named_params().iter().map(|(_, t)| t.numel()).sum()
    }
}

/// Registers parameters on a tape and remembers the resulting leaves in
/// binding order.
pub struct ParamBinder<'t> {
    tape: &'t Tape,
    trainable: bool,
    leaves: Vec<Var<'t>>,
}

impl<'t> ParamBinder<'t> {
    /// `trainable == false` binds parameters as constants (inference).
    pub fn new(tape: &'t Tape, trainable: bool) -> Self {
        ParamBinder {
            tape,
            trainable,
            leaves: Vec::new(),
        }
    }

    pub fn tape(&self) -> &'t Tape {
        self.tape
    }

    pub fn bind(&mut self, t: &Tensor) -> Var<'t> {
        let v = self.tape.leaf(t.clone(), self.trainable);
        self.leaves.push(v);
        v
    }

    pub fn leaves(&self) -> &[Var<'t>] {
        &self.leaves
    }
}

pub(crate) fn prefixed<'a>(prefix: &str, items: Vec<(String, &'a Tensor)>) -> Vec<(String, &'a Tensor)> {
    items
        .into_iter()
        .map(|(n, t)| (format!("{prefix}.{n}"), t))
        .collect()
}

pub(crate) fn prefixed_mut<'a>(
    prefix: &str,
    items: Vec<(String, &'a mut Tensor)>,
) -> Vec<(String, &'a mut Tensor)> {
    items
        .into_iter()
        .map(|(n, t)| (format!("{prefix}.{n}"), t))
        .collect()
}
