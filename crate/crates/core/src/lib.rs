pub mod control;
pub mod dynamics;
pub mod env;
pub mod geometry;
pub mod randomization;
pub mod reward;
pub mod sensing;
pub mod planner;
pub mod seeding;
