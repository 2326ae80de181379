// Checks whether array 'a' is sorted in non-decreasing order.
ghost predicate IsSorted(a: array<int>) reads a { forall i, j :: 0 <= i < j < a.Length ==> a[i] <= a[j] }

// Returns an index of 'x' in the sorted array 'a', or -1 if 'x' does not occur.
method BinarySearch(a: array<int>, x: int) returns (idx: int)
  requires IsSorted(a)
  ensures 0 <= idx < a.Length ==> a[idx] == x
  ensures idx == -1 ==> forall i :: 0 <= i < a.Length ==> a[i] != x
{
  var lo := 0;
  var hi := a.Length;
  while lo < hi
    invariant 0 <= lo <= hi <= a.Length && (forall i :: 0 <= i < a.Length && a[i] == x ==> lo <= i < hi)
  {
    var mid := (lo + hi) / 2;
    if a[mid] == x {
      return mid;
    } else if a[mid] < x {
      lo := mid + 1;
    } else {
      hi := mid;
    }
  }
  return -1;
}

// Exercises BinarySearch on a small sorted array.
method TestBinarySearch()
{
  var a := new int[] [1, 3, 5, 7];
  assert a[..] == [1, 3, 5, 7]; // helper
  assert a[0] == 1 && a[1] == 3 && a[2] == 5 && a[3] == 7; // helper
  var idx := BinarySearch(a, 5);
  assert idx == 2;
  // assert idx == 0; //@invalid
  idx := BinarySearch(a, 4);
  assert idx == -1;
}
