// Reports whether every element of 'a' is strictly positive.
method AllPositive(a: array<int>) returns (ok: bool)
  ensures ok <==> forall i :: 0 <= i < a.Length ==> a[i] > 0
{
  ok := true;
  var i := 0;
  while i < a.Length
    invariant 0 <= i <= a.Length
    invariant ok <==> forall k :: 0 <= k < i ==> a[k] > 0
  {
    if a[i] <= 0 {
      ok := false;
    }
    i := i + 1;
  }
}

method TestAllPositive()
{
  var a := new int[] [2, 4, 6];
  assert a[..] == [2, 4, 6]; // helper
  var ok := AllPositive(a);
  assert ok;
  var b := new int[] [1, -1];
  assert b[..] == [1, -1]; // helper
  var notOk := AllPositive(b);
  assert !notOk;
  // assert notOk; //@invalid
}
