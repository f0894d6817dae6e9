use super::QuantumError;

/// Offsets of a target/rest split of a row-major multi-index.
///
/// Full index = `rest[r] + target[t]`, where `target` enumerates the targeted
/// factors in the order given and `rest` the remaining factors in ascending order.
#[derive(Debug, Clone)]
pub(crate) struct Split {
    pub target: Vec<usize>,
    pub rest: Vec<usize>,
    pub rest_dims: Vec<usize>,
}

pub(crate) fn strides(dims: &[usize]) -> Vec<usize> {
    let mut s = vec![1; dims.len()];
    for k in (0..dims.len().saturating_sub(1)).rev() {
        s[k] = s[k + 1] * dims[k + 1];
    }
    s
}

fn offsets(dims: &[usize], strides: &[usize], which: &[usize]) -> Vec<usize> {
    let mut out = vec![0usize];
    for &w in which {
        let mut next = Vec::with_capacity(out.len() * dims[w]);
        for &o in &out {
            for d in 0..dims[w] {
                next.push(o + d * strides[w]);
            }
        }
        out = next;
    }
    out
}

pub(crate) fn validate_targets(count: usize, targets: &[usize]) -> Result<(), QuantumError> {
    for (i, &t) in targets.iter().enumerate() {
        if t >= count {
            return Err(QuantumError::InvalidSubsystem { index: t, count });
        }
        if targets[..i].contains(&t) {
            return Err(QuantumError::DuplicateSubsystem(t));
        }
    }
    Ok(())
}

pub(crate) fn split(dims: &[usize], targets: &[usize]) -> Result<Split, QuantumError> {
    validate_targets(dims.len(), targets)?;
    let st = strides(dims);
    let rest_idx: Vec<usize> = (0..dims.len()).filter(|k| !targets.contains(k)).collect();
    Ok(Split {
        target: offsets(dims, &st, targets),
        rest: offsets(dims, &st, &rest_idx),
        rest_dims: rest_idx.iter().map(|&k| dims[k]).collect(),
    })
}
