/**
 * Errors cross the binding boundary typed, carrying the core error kind and
 * its message verbatim, so a stack trace on either side reads the same.
 */
export class BoundaryError extends Error {
  readonly code: string;

  constructor(code: string, message: string) {
    super(message);
    this.name = "BoundaryError";
    this.code = code;
  }
}

/** Python repr() of the JSON scalars that show up in error messages. */
export function pyRepr(value: unknown): string {
  if (value === null || value === undefined) return "None";
  if (value === true) return "True";
  if (value === false) return "False";
  if (typeof value === "string") return `'${value}'`;
  return String(value);
}

/** Python str() of a float: integral values keep their trailing ".0". */
export function pyFloat(value: number): string {
  if (Number.isFinite(value) && Number.isInteger(value)) {
    return `${value}.0`;
  }
  return String(value);
}
