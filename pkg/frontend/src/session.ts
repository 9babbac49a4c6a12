/** What-if session state: baseline record, live overrides, and the latest
 * service results. Responses are tagged with a sequence number at request
 * time; anything that is not the newest request when it lands is discarded,
 * so the rendered score always matches the overrides on screen. */

import { ApiClient, ApiError } from './api.js';
import type { WhatIfResponse, WhatIfSide } from './types.js';

export class WhatIfSession {
  overrides: Record<string, number> = {};
  baselineResult: WhatIfSide | null = null;
  modifiedResult: WhatIfSide | null = null;
  deltaScore: number | null = null;
  fieldErrors: Record<string, string> = {};
  lastError: string | null = null;
  inFlight = false;

  private seq = 0;

  constructor(
    private readonly api: ApiClient,
    readonly modelId: string,
    readonly baseline: Record<string, number>,
  ) {}

  setOverride(name: string, value: number): void {
    this.overrides = { ...this.overrides, [name]: value };
  }

  clearOverride(name: string): void {
    const next = { ...this.overrides };
    delete next[name];
    this.overrides = next;
  }

  /** Send the current overrides; resolves true when this response was
   * rendered, false when a newer request superseded it. */
  async submitWhatIf(): Promise<boolean> {
    const mySeq = ++this.seq;
    const overrides = { ...this.overrides };
    this.inFlight = true;
    let response: WhatIfResponse;
    try {
      response = await this.api.whatif(this.modelId, this.baseline, overrides);
    } catch (err) {
      if (mySeq !== this.seq) {
        return false; // stale failure: a newer request owns the UI now
      }
      this.inFlight = false;
      if (err instanceof ApiError) {
        // keep the previous results on screen, surface field-level messages
        this.fieldErrors = err.fieldErrors();
        this.lastError = err.message;
      } else {
        this.fieldErrors = {};
        this.lastError = String(err);
      }
      return true;
    }
    if (mySeq !== this.seq) {
      return false; // stale success: discard silently
    }
    this.inFlight = false;
    this.fieldErrors = {};
    this.lastError = null;
    this.baselineResult = response.baseline;
    this.modifiedResult = response.modified;
    this.deltaScore = response.delta_score;
    return true;
  }
}
