//! Run configuration: INI-style sections with key=value entries.
