/**
 * Orders background refreshes after in-flight consent mutations.
 *
 * The portal is the source of truth, so a refresh racing a mutation
 * could paint pre-mutation state over the user's just-confirmed change.
 * Refreshes therefore wait for whatever mutation is running; mutations
 * never wait for refreshes.
 */
export class Interlock {
  private pending: Promise<unknown> = Promise.resolve();

  mutate<T>(work: () => Promise<T>): Promise<T> {
    const run = this.pending.then(work, work);
    // swallow for chaining only; callers still see the real rejection
    this.pending = run.catch(() => undefined);
    return run;
  }

  async refresh<T>(work: () => Promise<T>): Promise<T> {
    await this.pending;
    return work();
  }
}
