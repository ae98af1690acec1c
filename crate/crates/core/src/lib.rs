pub mod bse;
pub mod contact;
pub mod experiment;
pub mod fcm;
pub mod features;
pub mod io;
pub mod kinematics;
pub mod sensors;
pub mod scenario;
