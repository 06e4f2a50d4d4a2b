use crate::graph::Propensity;

use super::EstimatorError;

/// `z_i = y_i (t_i - p_i) / (p_i (1 - p_i))` for every node.
pub fn transformed_target(t: &[u8], y: &[f64], p: &Propensity) -> Result<Vec<f64>, EstimatorError> {
    if t.len() != y.len() {
        return Err(EstimatorError::Length(format!("{} treatments vs {} outcomes", t.len(), y.len())));
    }
    if let Propensity::PerNode(v) = p {
        if v.len() != t.len() {
            return Err(EstimatorError::Length(format!("{} propensities vs {} nodes", v.len(), t.len())));
        }
    }
    t.iter()
        .zip(y)
        .enumerate()
        .map(|(i, (&ti, &yi))| {
            let p = p.at(i);
            if !(p > 0.0 && p < 1.0) {
                return Err(EstimatorError::Domain { index: i, p });
            }
            Ok(yi * (ti as f64 - p) / (p * (1.0 - p)))
        })
        .collect()
}

/// 3-bit group code `[s_A, s_B, s_C]` over the candidate groups a node may
/// belong to given only its arm and outcome.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct PartialLabel([u8; 3]);

impl PartialLabel {
    pub const CONTROL_POSITIVE: PartialLabel = PartialLabel([1, 0, 0]);
    pub const CONTROL_NEGATIVE: PartialLabel = PartialLabel([0, 1, 1]);
    pub const TREATED_POSITIVE: PartialLabel = PartialLabel([1, 1, 0]);
    pub const TREATED_NEGATIVE: PartialLabel = PartialLabel([0, 0, 1]);

    pub fn from_code(code: [u8; 3]) -> Result<Self, EstimatorError> {
        let s = PartialLabel(code);
        match s {
            Self::CONTROL_POSITIVE | Self::CONTROL_NEGATIVE | Self::TREATED_POSITIVE | Self::TREATED_NEGATIVE => Ok(s),
            _ => Err(EstimatorError::InvalidCode(code)),
        }
    }

    pub fn code(self) -> [u8; 3] {
        self.0
    }
}

/// Group code for one observation. Controls with `y = 1` can only be A;
/// treated with `y = 0` can only be C; the other two cases are ambiguous.
pub fn partial_label(t: u8, y: f64) -> Result<PartialLabel, EstimatorError> {
    match (t, y) {
        (0, y) if y == 1.0 => Ok(PartialLabel::CONTROL_POSITIVE),
        (0, y) if y == 0.0 => Ok(PartialLabel::CONTROL_NEGATIVE),
        (1, y) if y == 1.0 => Ok(PartialLabel::TREATED_POSITIVE),
        (1, y) if y == 0.0 => Ok(PartialLabel::TREATED_NEGATIVE),
        (t, _) if t > 1 => Err(EstimatorError::InvalidCode([t, 0, 0])),
        _ => Err(EstimatorError::NonBinary { index: 0, value: y }),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Role {
    Pos,
    Neg,
    Excluded,
}

impl Role {
    /// `(target, weight)` for a binary cross-entropy term.
    pub fn target_weight(self) -> (f64, f64) {
        match self {
            Role::Pos => (1.0, 1.0),
            Role::Neg => (0.0, 1.0),
            Role::Excluded => (0.0, 0.0),
        }
    }
}

/// Roles of a node in classifier 1 (group A vs rest) and classifier 2
/// (group C vs rest).
pub fn classifier_membership(s: PartialLabel) -> (Role, Role) {
    match s {
        PartialLabel::CONTROL_POSITIVE => (Role::Pos, Role::Neg),
        PartialLabel::CONTROL_NEGATIVE => (Role::Neg, Role::Excluded),
        PartialLabel::TREATED_POSITIVE => (Role::Excluded, Role::Neg),
        PartialLabel::TREATED_NEGATIVE => (Role::Neg, Role::Pos),
        _ => unreachable!("PartialLabel values are validated on construction"),
    }
}

/// `τ̂_i = 1 - ŷ1_i - ŷ2_i`.
pub fn pl_uplift(y1: &[f64], y2: &[f64]) -> Vec<f64> {
    y1.iter().zip(y2).map(|(a, b)| 1.0 - a - b).collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn transformed_target_arithmetic() {
        let p = Propensity::Constant(0.5);
        assert_eq!(transformed_target(&[1], &[1.0], &p).unwrap(), vec![2.0]);
        assert_eq!(transformed_target(&[0], &[1.0], &p).unwrap(), vec![-2.0]);
        let per = Propensity::PerNode(vec![0.25, 0.8]);
        let z = transformed_target(&[1, 0], &[2.0, 3.0], &per).unwrap();
        assert!((z[0] - 2.0 * 0.75 / (0.25 * 0.75)).abs() < 1e-15);
        assert!((z[1] + 3.0 * 0.8 / (0.8 * 0.2)).abs() < 1e-12);
        assert!(matches!(
            transformed_target(&[1], &[1.0], &Propensity::Constant(1.0)),
            Err(EstimatorError::Domain { .. })
        ));
    }

    #[test]
    fn partial_label_table() {
        assert_eq!(partial_label(1, 1.0).unwrap().code(), [1, 1, 0]);
        assert_eq!(partial_label(0, 0.0).unwrap().code(), [0, 1, 1]);
        assert_eq!(partial_label(0, 1.0).unwrap().code(), [1, 0, 0]);
        assert_eq!(partial_label(1, 0.0).unwrap().code(), [0, 0, 1]);
        assert!(matches!(partial_label(1, 0.5), Err(EstimatorError::NonBinary { .. })));
    }

    #[test]
    fn membership_lists() {
        use Role::*;
        assert_eq!(classifier_membership(PartialLabel::from_code([1, 0, 0]).unwrap()), (Pos, Neg));
        assert_eq!(classifier_membership(PartialLabel::from_code([1, 1, 0]).unwrap()), (Excluded, Neg));
        assert_eq!(classifier_membership(PartialLabel::from_code([0, 1, 1]).unwrap()), (Neg, Excluded));
        assert_eq!(classifier_membership(PartialLabel::from_code([0, 0, 1]).unwrap()), (Neg, Pos));
        assert!(PartialLabel::from_code([1, 1, 1]).is_err());
    }

    #[test]
    fn every_code_participates_somewhere() {
        for t in 0..2u8 {
            for y in [0.0, 1.0] {
                let (a, b) = classifier_membership(partial_label(t, y).unwrap());
                assert!(a != Role::Excluded || b != Role::Excluded);
            }
        }
    }

    #[test]
    fn uplift_substitution() {
        let u = pl_uplift(&[0.3, 0.5], &[0.4, 0.5]);
        assert!((u[0] - 0.3).abs() < 1e-15);
        assert_eq!(u[1], 0.0);
    }
}
