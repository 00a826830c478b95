/** Session state machine for the review flow, kept free of DOM access so the
 * flow is unit-testable. The page layer renders from this object and calls
 * its methods from event handlers. */

import { ApiError } from "./api.js";
import type { Choice, NextUnit, VoteRequest } from "./api.js";

export interface Selection {
  choice: Choice | null;
  invalid: boolean;
}

export function emptySelection(): Selection {
  return { choice: null, invalid: false };
}

/** A vote needs either an answer or the invalid-image flag. */
export function canSubmit(sel: Selection): boolean {
  return sel.choice !== null || sel.invalid;
}

/** Keyboard shortcut mapping: 1/2/3 pick an answer, x flags the image.
 * Returns null for keys the review screen does not handle. */
export function applyKey(sel: Selection, key: string): Selection | null {
  switch (key) {
    case "1":
      return { ...sel, choice: "true" };
    case "2":
      return { ...sel, choice: "false" };
    case "3":
      return { ...sel, choice: "not_sure" };
    case "x":
    case "X":
      return { ...sel, invalid: !sel.invalid };
    default:
      return null;
  }
}

export type Screen = "login" | "review" | "done" | "error";

export interface VoteApi {
  nextUnit(annotatorId: string): Promise<NextUnit | null>;
  vote(req: VoteRequest): Promise<number>;
}

export class Session {
  screen: Screen = "login";
  annotatorId = "";
  unit: NextUnit | null = null;
  selection: Selection = emptySelection();
  submitting = false;
  lastError = "";
  answered = 0;
  onchange: () => void = () => {};

  constructor(private api: VoteApi) {}

  private emit(): void {
    this.onchange();
  }

  private fail(err: unknown): void {
    this.screen = "error";
    this.lastError =
      err instanceof ApiError ? `server error ${err.status}: ${err.message}` : String(err);
  }

  /** Validates the annotator id and loads the first unit. */
  async start(annotatorId: string): Promise<boolean> {
    const id = annotatorId.trim();
    if (id === "") {
      this.lastError = "enter an annotator id";
      this.emit();
      return false;
    }
    this.annotatorId = id;
    this.lastError = "";
    await this.advance();
    return this.screen !== "error";
  }

  select(choice: Choice): void {
    if (this.screen !== "review") return;
    this.selection = { ...this.selection, choice };
    this.emit();
  }

  toggleInvalid(): void {
    if (this.screen !== "review") return;
    this.selection = { ...this.selection, invalid: !this.selection.invalid };
    this.emit();
  }

  get submitDisabled(): boolean {
    return this.submitting || !canSubmit(this.selection);
  }

  /** Records the vote and advances. Returns "blocked" without touching the
   * server when nothing is selected or a submit is already in flight, so a
   * double click or repeated Enter press records exactly one vote. */
  async submit(): Promise<"recorded" | "blocked"> {
    if (this.screen !== "review" || this.unit === null || this.submitDisabled) {
      return "blocked";
    }
    this.submitting = true;
    this.emit();
    try {
      await this.api.vote({
        unit_id: this.unit.unit_id,
        annotator_id: this.annotatorId,
        choice: this.selection.choice,
        invalid_flag: this.selection.invalid,
      });
      this.answered += 1;
      await this.advance();
      return "recorded";
    } catch (err) {
      this.fail(err);
      return "blocked";
    } finally {
      this.submitting = false;
      this.emit();
    }
  }

  /** Fetch the next unit; flips to the done screen when none remain. */
  async advance(): Promise<void> {
    try {
      const unit = await this.api.nextUnit(this.annotatorId);
      this.selection = emptySelection();
      this.unit = unit;
      this.screen = unit === null ? "done" : "review";
      this.lastError = "";
    } catch (err) {
      this.fail(err);
    }
    this.emit();
  }

  /** Error-banner action: go back to login if we never got in, else refetch. */
  async retry(): Promise<void> {
    if (this.annotatorId === "") {
      this.screen = "login";
      this.lastError = "";
      this.emit();
      return;
    }
    await this.advance();
  }
}
