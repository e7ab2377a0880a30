//! Graphical imitability tests: direct parents, π-backdoor admissibility,
//! imitation surrogates and instruments.

use crate::diagram::{hat_name, node_set, CausalDiagram, DiagramError, NodeSet, PolicySpace};
use crate::identify::{identify_policy, IdError};

/// `π(x | pa(Π)) = P(x | conditioning)` read off the observational table.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PolicyPrescription {
    pub conditioning: NodeSet,
}

/// Imitation by copying the expert's conditional, valid when every parent of
/// the action is an input and no bidirected edge touches the action.
pub fn direct_parents_imitable(
    diagram: &CausalDiagram,
    space: &PolicySpace,
) -> Result<Option<PolicyPrescription>, DiagramError> {
    space.validate(diagram)?;
    let parents = diagram.parents(&space.action)?;
    if !diagram.spouses(&space.action)?.is_empty() || !parents.is_subset(&space.inputs) {
        return Ok(None);
    }
    Ok(Some(PolicyPrescription { conditioning: parents }))
}

fn check_reward(diagram: &CausalDiagram, space: &PolicySpace, reward: &str) -> Result<(), DiagramError> {
    diagram.idx(reward)?;
    if reward == space.action {
        return Err(DiagramError::InvalidPolicy(format!("reward {reward} is the action")));
    }
    Ok(())
}

/// Whether `z ⊆ Pa(Π)` blocks every backdoor path: `(Y ⊥ X | Z)` once the
/// action's outgoing edges are cut.
pub fn test_pi_backdoor(
    diagram: &CausalDiagram,
    space: &PolicySpace,
    reward: &str,
    z: &NodeSet,
) -> Result<bool, DiagramError> {
    space.validate(diagram)?;
    check_reward(diagram, space, reward)?;
    if !z.is_subset(&space.inputs) || z.contains(reward) {
        return Ok(false);
    }
    let cut = diagram.mutilate(&NodeSet::new(), &node_set([space.action.as_str()]))?;
    cut.d_separated(&node_set([reward]), &node_set([space.action.as_str()]), z)
}

/// Tests the canonical candidate `An(Y) ∩ Pa(Π)`; if it fails, no subset of
/// the inputs is admissible.
pub fn find_pi_backdoor(
    diagram: &CausalDiagram,
    space: &PolicySpace,
    reward: &str,
) -> Result<Option<NodeSet>, DiagramError> {
    check_reward(diagram, space, reward)?;
    let an = diagram.ancestors(&node_set([reward]))?;
    let z: NodeSet = an.intersection(&space.inputs).cloned().collect();
    Ok(if test_pi_backdoor(diagram, space, reward, &z)? {
        Some(z)
    } else {
        None
    })
}

/// Shrinks an admissible set by dropping members (in name order) while the
/// remainder stays admissible.
pub fn minimize_backdoor(
    diagram: &CausalDiagram,
    space: &PolicySpace,
    reward: &str,
    z: &NodeSet,
) -> Result<NodeSet, DiagramError> {
    let mut cur = z.clone();
    for v in z {
        let mut trial = cur.clone();
        trial.remove(v);
        if test_pi_backdoor(diagram, space, reward, &trial)? {
            cur = trial;
        }
    }
    Ok(cur)
}

/// Every admissible subset of the inputs, smallest first.
pub fn admissible_backdoor_sets(
    diagram: &CausalDiagram,
    space: &PolicySpace,
    reward: &str,
) -> Result<Vec<NodeSet>, DiagramError> {
    let inputs: Vec<&String> = space.inputs.iter().collect();
    if inputs.len() > 20 {
        return Err(DiagramError::InvalidPolicy(format!(
            "{} inputs are too many to list every subset",
            inputs.len()
        )));
    }
    let mut out = Vec::new();
    for mask in 0u32..(1 << inputs.len()) {
        let z: NodeSet = (0..inputs.len())
            .filter(|i| mask >> i & 1 == 1)
            .map(|i| inputs[i].clone())
            .collect();
        if test_pi_backdoor(diagram, space, reward, &z)? {
            out.push(z);
        }
    }
    out.sort_by(|a, b| a.len().cmp(&b.len()).then_with(|| a.cmp(b)));
    Ok(out)
}

/// `(Y ⊥ X̂ | S)` in `G ∪ Π`. A set containing the reward itself counts as a
/// surrogate.
pub fn is_surrogate(
    diagram: &CausalDiagram,
    space: &PolicySpace,
    reward: &str,
    s: &NodeSet,
) -> Result<bool, DiagramError> {
    check_reward(diagram, space, reward)?;
    for v in s {
        if !diagram.is_observed(v)? {
            return Err(DiagramError::InvalidPolicy(format!("surrogate member {v} is latent")));
        }
    }
    if s.contains(reward) {
        return Ok(true);
    }
    let g = diagram.augment_policy(space)?;
    let hat = hat_name(&space.action);
    g.d_separated(&node_set([hat.as_str()]), &node_set([reward]), s)
}

/// A surrogate whose distribution under policies of `subspace` is
/// identifiable.
pub fn is_instrument(
    diagram: &CausalDiagram,
    space: &PolicySpace,
    reward: &str,
    s: &NodeSet,
    subspace: &PolicySpace,
) -> Result<bool, IdError> {
    if !subspace.is_subspace_of(space) {
        return Err(DiagramError::InvalidPolicy(format!("{subspace} is not a subspace of {space}")).into());
    }
    if !is_surrogate(diagram, subspace, reward, s)? {
        return Ok(false);
    }
    if s.contains(&space.action) {
        return Ok(false);
    }
    match identify_policy(diagram, subspace, s) {
        Ok(_) => Ok(true),
        Err(IdError::NotIdentifiable(_)) => Ok(false),
        Err(e) => Err(e),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::diagram::DiagramBuilder;

    fn fig1b() -> CausalDiagram {
        DiagramBuilder::new()
            .observed("X")
            .observed("Z")
            .latent("L")
            .latent("Y")
            .edge("Z", "L")
            .edge("L", "X")
            .edge("Z", "Y")
            .edge("X", "Y")
            .edge("Z", "X")
            .confounded("Z", "Y")
            .build()
            .unwrap()
    }

    #[test]
    fn direct_parents() {
        let d = DiagramBuilder::new()
            .observed("Z")
            .observed("X")
            .latent("Y")
            .edge("Z", "X")
            .edge("X", "Y")
            .confounded("Z", "Y")
            .build()
            .unwrap();
        let p = direct_parents_imitable(&d, &PolicySpace::new("X", ["Z"])).unwrap();
        assert_eq!(p.unwrap().conditioning, node_set(["Z"]));
        assert!(direct_parents_imitable(&fig1b(), &PolicySpace::new("X", ["Z"])).unwrap().is_none());
    }

    #[test]
    fn backdoor_on_fig1b() {
        let d = fig1b();
        let space = PolicySpace::new("X", ["Z"]);
        assert_eq!(find_pi_backdoor(&d, &space, "Y").unwrap(), Some(node_set(["Z"])));
        assert!(!test_pi_backdoor(&d, &space, "Y", &NodeSet::new()).unwrap());
        assert_eq!(admissible_backdoor_sets(&d, &space, "Y").unwrap(), vec![node_set(["Z"])]);
        assert_eq!(minimize_backdoor(&d, &space, "Y", &node_set(["Z"])).unwrap(), node_set(["Z"]));
    }

    #[test]
    fn surrogates_on_frontdoor() {
        let d = DiagramBuilder::new()
            .observed("X")
            .observed("W")
            .observed("S")
            .latent("Y")
            .edge("X", "W")
            .edge("W", "S")
            .edge("S", "Y")
            .confounded("X", "S")
            .build()
            .unwrap();
        let space = PolicySpace::new("X", Vec::<String>::new());
        assert!(is_surrogate(&d, &space, "Y", &node_set(["S"])).unwrap());
        assert!(is_surrogate(&d, &space, "Y", &node_set(["W", "S"])).unwrap());
        assert!(!is_surrogate(&d, &space, "Y", &node_set(["W"])).unwrap());
        assert!(!is_surrogate(&d, &space, "Y", &NodeSet::new()).unwrap());
        assert!(is_instrument(&d, &space, "Y", &node_set(["S"]), &space).unwrap());
        assert!(!is_instrument(&d, &space, "Y", &NodeSet::new(), &space).unwrap());
    }
}
