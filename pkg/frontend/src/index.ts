export { BoundaryError } from "./errors.js";
export { NORMALIZATION_VERSION, normalize } from "./textnorm.js";
export { SGSET_FILE_VERSION, loadSgset, parseSgset } from "./sgset.js";
export type { Gram, SgCluster, SgSet } from "./sgset.js";
export { boundClassify, labelTokens, matchSgs, tokenSpans } from "./classify.js";
export type { ClassifyResult, MatchSpan } from "./classify.js";
export { boundHicra, grpoAdvantages } from "./credit.js";
export type { Mask } from "./credit.js";
