// Reverses the contents of 'a' in place.
method Reverse(a: array<int>)
  modifies a
  ensures forall i :: 0 <= i < a.Length ==> a[i] == old(a[a.Length - 1 - i])
{
  var lo := 0;
  var hi := a.Length - 1;
  while lo < hi
    invariant 0 <= lo <= hi + 1 <= a.Length
    invariant lo + hi == a.Length - 1
    invariant forall i :: 0 <= i < lo ==> a[i] == old(a[a.Length - 1 - i])
    invariant forall i :: hi < i < a.Length ==> a[i] == old(a[a.Length - 1 - i])
    invariant forall i :: lo <= i <= hi ==> a[i] == old(a[i])
  {
    a[lo], a[hi] := a[hi], a[lo];
    lo := lo + 1;
    hi := hi - 1;
  }
}

method TestReverse()
{
  var a := new int[] [1, 2, 3];
  assert a[..] == [1, 2, 3]; // helper
  Reverse(a);
  assert a[..] == [3, 2, 1];
  // assert a[0] == 1; //@invalid
}
