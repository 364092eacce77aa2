//! Prompt assembly, backends, response parsing and vote collection.

pub mod backend;
pub mod collect;
pub mod parse;
pub mod personas;
pub mod prompts;

pub use backend::{Backend, EchoBackend, FnBackend, HttpBackend, HttpSettings, MockBackend};
pub use collect::{
    collect_base_votes, collect_persona_votes, CollectionConfig, Collector, ModelVoteRecord,
    ModelVotes, PersonaVotes, Style, TraitVotes,
};
pub use parse::parse_vote;
pub use personas::Trait;
pub use prompts::{build_base_prompt, build_personality_prompt, build_user_prompt};
