// Bounded outgoing frame queue. The capture loop never blocks on the
// network: beyond the capacity the oldest frames are dropped, so a slow
// link degrades to a lower effective frame rate instead of unbounded lag.

export class DropOldestQueue<T> {
  private items: T[] = [];
  private droppedTotal = 0;

  constructor(readonly capacity: number = 60) {
    if (capacity < 1) throw new Error("capacity must be >= 1");
  }

  /** Returns the number of items dropped to make room (0 or 1). */
  push(item: T): number {
    let dropped = 0;
    if (this.items.length >= this.capacity) {
      this.items.shift();
      dropped = 1;
      this.droppedTotal += 1;
    }
    this.items.push(item);
    return dropped;
  }

  shift(): T | undefined {
    return this.items.shift();
  }

  get length(): number {
    return this.items.length;
  }

  get dropped(): number {
    return this.droppedTotal;
  }

  clear(): void {
    this.items = [];
  }
}
