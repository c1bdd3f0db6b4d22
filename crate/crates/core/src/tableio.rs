//! Plain-text table serialization for rules, measures, and PC expansions.
