export * from "./calibration.js";
export * from "./coords.js";
export * from "./flicker.js";
export * from "./api.js";
export * from "./trial.js";
export * from "./training.js";
