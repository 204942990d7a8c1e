//! Canonical catalog of the 17 constructing variables.
//!
//! Every module that touches the variable vector indexes it through these
//! constants; no operation accepts a reordered vector.

/// Number of constructing variables.
pub const VARIABLE_COUNT: usize = 17;

/// Value domain of a variable, used for record validation and parsing.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VariableKind {
    /// Dollar amount, must be > 0 when present.
    Dollars,
    /// Percentage in [0, 100] when present.
    Percent,
    /// Log-ratio (income disparity); any finite real.
    LogRatio,
}

#[derive(Debug, Clone, Copy)]
pub struct VariableDef {
    /// Stable snake_case identifier, used as the default column name.
    pub name: &'static str,
    pub kind: VariableKind,
}

/// Canonical order of the 17 variables. Index positions are fixed;
/// `MEDIAN_HOME_VALUE` etc. below are the only sanctioned way to refer
/// to individual slots.
pub const VARIABLES: [VariableDef; VARIABLE_COUNT] = [
    VariableDef {
        name: "median_family_income",
        kind: VariableKind::Dollars,
    },
    VariableDef {
        name: "income_disparity",
        kind: VariableKind::LogRatio,
    },
    VariableDef {
        name: "pct_families_below_poverty",
        kind: VariableKind::Percent,
    },
    VariableDef {
        name: "pct_below_150_poverty",
        kind: VariableKind::Percent,
    },
    VariableDef {
        name: "pct_single_parent",
        kind: VariableKind::Percent,
    },
    VariableDef {
        name: "pct_no_vehicle",
        kind: VariableKind::Percent,
    },
    VariableDef {
        name: "pct_no_telephone",
        kind: VariableKind::Percent,
    },
    VariableDef {
        name: "pct_incomplete_plumbing",
        kind: VariableKind::Percent,
    },
    VariableDef {
        name: "pct_owner_occupied",
        kind: VariableKind::Percent,
    },
    VariableDef {
        name: "pct_crowded",
        kind: VariableKind::Percent,
    },
    VariableDef {
        name: "median_mortgage",
        kind: VariableKind::Dollars,
    },
    VariableDef {
        name: "median_gross_rent",
        kind: VariableKind::Dollars,
    },
    VariableDef {
        name: "median_home_value",
        kind: VariableKind::Dollars,
    },
    VariableDef {
        name: "pct_white_collar",
        kind: VariableKind::Percent,
    },
    VariableDef {
        name: "pct_unemployed",
        kind: VariableKind::Percent,
    },
    VariableDef {
        name: "pct_no_high_school",
        kind: VariableKind::Percent,
    },
    VariableDef {
        name: "pct_at_least_high_school",
        kind: VariableKind::Percent,
    },
];

pub const MEDIAN_FAMILY_INCOME: usize = 0;
pub const INCOME_DISPARITY: usize = 1;
pub const PCT_FAMILIES_BELOW_POVERTY: usize = 2;
pub const PCT_BELOW_150_POVERTY: usize = 3;
pub const PCT_SINGLE_PARENT: usize = 4;
pub const PCT_NO_VEHICLE: usize = 5;
pub const PCT_NO_TELEPHONE: usize = 6;
pub const PCT_INCOMPLETE_PLUMBING: usize = 7;
pub const PCT_OWNER_OCCUPIED: usize = 8;
pub const PCT_CROWDED: usize = 9;
pub const MEDIAN_MORTGAGE: usize = 10;
pub const MEDIAN_GROSS_RENT: usize = 11;
pub const MEDIAN_HOME_VALUE: usize = 12;
pub const PCT_WHITE_COLLAR: usize = 13;
pub const PCT_UNEMPLOYED: usize = 14;
pub const PCT_NO_HIGH_SCHOOL: usize = 15;
pub const PCT_AT_LEAST_HIGH_SCHOOL: usize = 16;

/// Look up a variable index by its canonical name.
pub fn variable_index(name: &str) -> Option<usize> {
    VARIABLES.iter().position(|v| v.name == name)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn catalog_is_consistent() {
        assert_eq!(VARIABLES.len(), VARIABLE_COUNT);
        assert_eq!(VARIABLES[MEDIAN_HOME_VALUE].name, "median_home_value");
        assert_eq!(
            VARIABLES[PCT_FAMILIES_BELOW_POVERTY].name,
            "pct_families_below_poverty"
        );
        assert_eq!(variable_index("pct_unemployed"), Some(PCT_UNEMPLOYED));
        assert_eq!(variable_index("nope"), None);
        // names are unique
        for (i, v) in VARIABLES.iter().enumerate() {
            assert_eq!(variable_index(v.name), Some(i));
        }
    }
}
