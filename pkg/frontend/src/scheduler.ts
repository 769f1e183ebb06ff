// Debounced, serialized request scheduling with stale-response discarding.
//
// Slider drags fire many state changes; the server should see at most one
// in-flight request, sent on a trailing debounce edge, and the screen must
// end up showing the response for the *latest* state. Responses carry a
// send-time sequence number; anything older than the last applied one is
// dropped.

export class LatestRequestScheduler<T> {
  private timer: ReturnType<typeof setTimeout> | null = null;
  private inFlight = false;
  private dirty = false;
  private nextSeq = 0;
  private lastApplied = -1;
  /** requests actually sent; exposed for tests and the driver */
  sentCount = 0;

  constructor(
    private readonly send: () => Promise<T>,
    private readonly apply: (result: T, seq: number) => void,
    private readonly waitMs = 50,
    private readonly onError: (err: unknown) => void = () => undefined,
  ) {}

  /** Note that the desired state changed; a trailing-edge send follows. */
  request(): void {
    this.dirty = true;
    if (this.timer !== null) clearTimeout(this.timer);
    this.timer = setTimeout(() => {
      this.timer = null;
      void this.fire();
    }, this.waitMs);
  }

  get busy(): boolean {
    return this.inFlight || this.dirty || this.timer !== null;
  }

  /** Resolves once the latest requested state has been applied (or failed). */
  async settled(): Promise<void> {
    while (this.busy) {
      await new Promise((resolve) => setTimeout(resolve, this.waitMs / 2 + 1));
    }
  }

  private async fire(): Promise<void> {
    if (this.inFlight || !this.dirty) return;
    this.dirty = false;
    const seq = this.nextSeq++;
    this.inFlight = true;
    this.sentCount++;
    try {
      const result = await this.send();
      if (seq > this.lastApplied) {
        this.lastApplied = seq;
        this.apply(result, seq);
      }
    } catch (err) {
      this.onError(err);
    } finally {
      this.inFlight = false;
      if (this.dirty && this.timer === null) {
        // state moved while we were in flight; send the latest now
        void this.fire();
      }
    }
  }
}
